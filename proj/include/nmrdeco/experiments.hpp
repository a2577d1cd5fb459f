#pragma once

// Scenario runners for the decoherence experiments and their closed forms.
//
// One-qubit system (abstract circuit): H on the system, then for every
// environment qubit a tilt R(theta) followed by a CNOT from the system. The
// reduced coherence, normalized to a unit diagonal, is -sin(theta)^N.
//
// Two-qubit system (NMR): a Bell state of C1/C2 is prepared with the proton
// decoupled, then evolves under the refocused zz couplings to a maximally
// mixed environment. Its double-quantum coherence is
// prod_k cos(pi (J1k + J2k) t).

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "nmrdeco/nmr_model.hpp"
#include "nmrdeco/propagator.hpp"
#include "nmrdeco/sequence.hpp"

namespace nmrdeco::experiments {

inline constexpr std::size_t kMaxEnvironmentQubits = 11;
inline constexpr std::size_t kMaxDqEnvironmentSpins = 9;

// ---------------------------------------------------------------------------
// Sequence text builders

// Walsh-Hadamard up to a global phase: i*H.
inline std::string hadamard_text(const std::string& spin) {
  return "[pi]x^{" + spin + "} - [pi/2]y^{" + spin + "}";
}

// |down> -> cos(theta/2)|up> + sin(theta/2)|down>, up to a global phase.
inline std::string tilt_text(const std::string& spin) {
  return "[theta]y^{" + spin + "} - [pi]x^{" + spin + "}";
}

inline std::string coupling_text(const std::string& a, const std::string& b) {
  return seq::format(seq::Element{seq::Delay{seq::CouplingQuarter{a, b}}});
}

// [pi/2]x^{a,b} - 1/(4Jab) - [pi]x^{a,b} - 1/(4Jab) - [pi/2]y^{b}
inline std::string bell_prep_text(const std::string& a, const std::string& b) {
  const std::string both = "{" + a + "," + b + "}";
  const std::string quarter = coupling_text(a, b);
  return "[pi/2]x^" + both + " - " + quarter + " - [pi]x^" + both + " - " + quarter + " - [pi/2]y^{" + b + "}";
}

// Entangling sequence with a tilt of the partner spin first.
inline std::string entangle_text(const std::string& observed, const std::string& partner) {
  return "[theta]x^{" + partner + "} - " + bell_prep_text(observed, partner);
}

inline std::string product_text(const std::string& observed, const std::string& partner) {
  return "[theta]x^{" + partner + "} - [pi/2]x^{" + observed + "," + partner + "}";
}

// Wraps `body` with decouple(on)/decouple(off) for each of `spins`.
inline std::string with_decoupling(const std::string& body, const std::vector<std::string>& spins) {
  std::string s;
  for (const auto& l : spins) s += "decouple(" + l + " on) - ";
  s += body;
  for (const auto& l : spins) s += " - decouple(" + l + " off)";
  return s;
}

// ---------------------------------------------------------------------------
// Helpers

// Product state: |down> on every spin except `mixed`, which are 1/2.
inline DensityMatrix initial_state(const SpinSystem& sys, const std::vector<std::string>& mixed) {
  const auto mixed_idx = resolve_labels(sys, mixed);
  ComplexMatrix m;
  for (std::size_t k = 1; k <= sys.size(); ++k) {
    const bool is_mixed = std::find(mixed_idx.begin(), mixed_idx.end(), k) != mixed_idx.end();
    const ComplexMatrix f = is_mixed ? 0.5 * ComplexMatrix::identity(2) : projector_down();
    m = k == 1 ? f : kron(m, f);
  }
  return DensityMatrix(std::move(m), StateKind::TrueState, unchecked);
}

inline std::vector<std::string> labels_except(const SpinSystem& sys, const std::vector<std::string>& keep) {
  std::vector<std::string> out;
  for (const auto& s : sys.spins())
    if (std::find(keep.begin(), keep.end(), s.label) == keep.end()) out.push_back(s.label);
  return out;
}

// Runs `body` on `sys` with every spin outside {a, b} decoupled and mixed,
// returning the full state.
inline DensityMatrix run_on_pair(const SpinSystem& sys, const std::string& a, const std::string& b,
                                 const std::string& body, const seq::Binding& bind = {}) {
  const auto others = labels_except(sys, {a, b});
  const auto program = seq::parse(others.empty() ? body : with_decoupling(body, others));
  return apply_all(initial_state(sys, others), seq::compile(program, sys, bind));
}

// Element (0,1) of a one-spin state scaled to a unit diagonal.
inline Complex single_spin_coherence(const DensityMatrix& reduced) {
  if (reduced.dim() != 2) throw InputError("single_spin_coherence expects a one-spin state");
  return reduced(0, 1) * (2.0 / reduced.trace().real());
}

// Double-quantum coherence of a two-spin state in the sign convention of the
// decay law: -2 Re rho[up,up][down,down] for a unit-trace state.
inline double double_quantum_coherence(const DensityMatrix& pair) {
  if (pair.dim() != 4) throw InputError("double_quantum_coherence expects a two-spin state");
  return -2.0 * pair(0, 3).real() / pair.trace().real();
}

// ---------------------------------------------------------------------------
// One-qubit system, abstract circuit

struct OneQubitResult {
  DensityMatrix rho_reduced;  // unit-trace state of the system qubit
  Complex coherence;          // unit-diagonal (0,1) element; equals -sin(theta)
};

struct NEnvironmentResult {
  double coherence_closed;
  Complex coherence_bruteforce;
  DensityMatrix rho_reduced;
};

inline double closed_form_n_environment(double theta, std::size_t n_env) {
  return -std::pow(std::sin(theta), static_cast<double>(n_env));
}

inline NEnvironmentResult scenario_n_environment(double theta, std::size_t n_env) {
  if (n_env < 1 || n_env > kMaxEnvironmentQubits)
    throw InputError("environment size " + std::to_string(n_env) + " outside [1, 11]");
  const SpinSystem sys = systems::abstract_register(n_env);
  const std::size_t n = n_env + 1;
  const seq::Binding bind{{"theta", theta}};
  DensityMatrix rho = pseudo_pure_down(n);
  rho = apply_all(std::move(rho), seq::compile(seq::parse(hadamard_text("S")), sys));
  for (std::size_t k = 1; k <= n_env; ++k) {
    rho = apply_all(std::move(rho), seq::compile(seq::parse(tilt_text(sys.label(k + 1))), sys, bind));
    rho = apply(std::move(rho), make_cnot(1, k + 1, n));
  }
  DensityMatrix reduced = partial_trace(rho, {1});
  const Complex c = single_spin_coherence(reduced);
  return {closed_form_n_environment(theta, n_env), c, std::move(reduced)};
}

inline OneQubitResult scenario_one_qubit(double theta) {
  auto r = scenario_n_environment(theta, 1);
  return {std::move(r.rho_reduced), r.coherence_bruteforce};
}

// ---------------------------------------------------------------------------
// One-qubit system, NMR pulse sequences

struct NmrOneQubitResult {
  DensityMatrix rho_full;  // every spin of the system
  DensityMatrix rho_pair;  // observed + partner (other spins traced out)
  Complex coherence;       // unit-diagonal coherence of the observed spin
  PeakPair peaks;          // observed doublet split by the partner
};

namespace detail {

inline NmrOneQubitResult finish_pair(const SpinSystem& sys, const std::string& observed, const std::string& partner,
                                     DensityMatrix full) {
  const std::size_t o = sys.index_of(observed), p = sys.index_of(partner);
  const std::vector<std::size_t> keep{std::min(o, p), std::max(o, p)};
  DensityMatrix pair = sys.size() == 2 ? full : partial_trace(full, keep);
  const DensityMatrix obs = partial_trace(full, {o});
  const PeakPair peaks = peak_amplitudes(full, o, p);
  return {std::move(full), std::move(pair), single_spin_coherence(obs), peaks};
}

}  // namespace detail

// Tilt of the partner, then Bell preparation: the observed spin decoheres as
// -sin(theta).
inline NmrOneQubitResult scenario_nmr_entangled(const SpinSystem& sys, double theta, const std::string& observed,
                                                const std::string& partner) {
  DensityMatrix full = run_on_pair(sys, observed, partner, entangle_text(observed, partner), {{"theta", theta}});
  return detail::finish_pair(sys, observed, partner, std::move(full));
}

// Product-state control: tilt then a nonselective pi/2 read pulse.
inline NmrOneQubitResult scenario_nmr_product(const SpinSystem& sys, double theta, const std::string& observed,
                                              const std::string& partner) {
  DensityMatrix full = run_on_pair(sys, observed, partner, product_text(observed, partner), {{"theta", theta}});
  return detail::finish_pair(sys, observed, partner, std::move(full));
}

// ---------------------------------------------------------------------------
// Two-qubit system

// Bell preparation on (a, b) of `sys` from |down down>; other spins are
// decoupled during the preparation and traced out afterwards.
inline DensityMatrix scenario_bell_prep(const SpinSystem& sys, const std::string& a, const std::string& b) {
  DensityMatrix full = run_on_pair(sys, a, b, bell_prep_text(a, b));
  if (sys.size() == 2) return full;
  const std::size_t ia = sys.index_of(a), ib = sys.index_of(b);
  return partial_trace(full, {std::min(ia, ib), std::max(ia, ib)});
}

inline DensityMatrix scenario_bell_prep() { return scenario_bell_prep(systems::tce(), "C1", "C2"); }

// Full sequence text of the double-quantum experiment on (a, b).
inline std::string dq_text(const SpinSystem& sys, const std::string& a, const std::string& b, bool readout) {
  std::string s = with_decoupling(bell_prep_text(a, b), labels_except(sys, {a, b})) + " - refocus(t)";
  if (readout) s += " - [pi/2]x^{" + b + "}";
  return s;
}

// Bell state (x) mixed environment, refocused evolution for t, optional
// [pi/2]x read pulse on b, environment traced out. Unit-trace two-spin state.
inline DensityMatrix scenario_dq_evolution(const SpinSystem& sys, const std::string& a, const std::string& b,
                                           double t, bool apply_readout) {
  if (!(t >= 0)) throw InputError("evolution time must be non-negative");
  const auto env = labels_except(sys, {a, b});
  const auto program = seq::parse(dq_text(sys, a, b, apply_readout));
  const DensityMatrix full = apply_all(initial_state(sys, env), seq::compile(program, sys, {{"t", t}}));
  const std::size_t ia = sys.index_of(a), ib = sys.index_of(b);
  return partial_trace(full, {std::min(ia, ib), std::max(ia, ib)});
}

inline DensityMatrix scenario_dq_evolution(double t, bool apply_readout) {
  return scenario_dq_evolution(systems::tce(), "C1", "C2", t, apply_readout);
}

inline double closed_form_dq(double j13_hz, double j23_hz, double t) {
  return std::cos(std::numbers::pi * (j13_hz + j23_hz) * t);
}

// Period of the double-quantum oscillation, 2 / (J13 + J23).
inline double dq_period(double j13_hz, double j23_hz) { return 2.0 / (j13_hz + j23_hz); }

struct EnvironmentCoupling {
  double j1k_hz = 0.0;
  double j2k_hz = 0.0;
};

struct MultiEnvironmentResult {
  double closed;
  double bruteforce;
};

inline double closed_form_multi_env(double t, const std::vector<EnvironmentCoupling>& env) {
  double p = 1.0;
  for (const auto& e : env) p *= std::cos(std::numbers::pi * (e.j1k_hz + e.j2k_hz) * t);
  return p;
}

// System S1/S2 coupled by j12, environment spins E1..Ek coupled only to the
// system ("ideal gas"). Offsets are zero, so the delay evolves under the zz
// interaction alone.
inline SpinSystem multi_env_system(const std::vector<EnvironmentCoupling>& env, double j12_hz = 103.1) {
  std::vector<Spin> spins{{"S1", 0.0}, {"S2", 0.0}};
  std::vector<Coupling> couplings{{"S1", "S2", j12_hz}};
  for (std::size_t k = 0; k < env.size(); ++k) {
    const std::string l = "E" + std::to_string(k + 1);
    spins.push_back({l, 0.0});
    couplings.push_back({"S1", l, env[k].j1k_hz});
    couplings.push_back({"S2", l, env[k].j2k_hz});
  }
  return SpinSystem(std::move(spins), couplings, "S1");
}

inline MultiEnvironmentResult scenario_multi_env_dq(double t, const std::vector<EnvironmentCoupling>& env,
                                                    double j12_hz = 103.1) {
  if (env.empty() || env.size() > kMaxDqEnvironmentSpins)
    throw InputError("environment size " + std::to_string(env.size()) + " outside [1, 9]");
  if (!(t >= 0)) throw InputError("evolution time must be non-negative");
  const SpinSystem sys = multi_env_system(env, j12_hz);
  const auto others = labels_except(sys, {"S1", "S2"});
  const std::string text = with_decoupling(bell_prep_text("S1", "S2"), others) + " - t";
  const DensityMatrix full =
      apply_all(initial_state(sys, others), seq::compile(seq::parse(text), sys, {{"t", t}}));
  return {closed_form_multi_env(t, env), double_quantum_coherence(partial_trace(full, {1, 2}))};
}

}  // namespace nmrdeco::experiments
