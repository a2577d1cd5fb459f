#pragma once

#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nmrdeco/propagator.hpp"
#include "nmrdeco/spin_core.hpp"

namespace nmrdeco {

struct Spin {
  std::string label;
  double offset_hz = 0.0;  // rotating-frame offset relative to the reference spin
  bool operator==(const Spin&) const = default;
};

struct Coupling {
  std::string a;
  std::string b;
  double hz = 0.0;
};

class SpinSystem {
 public:
  SpinSystem(std::vector<Spin> spins, const std::vector<Coupling>& couplings, std::string reference)
      : spins_(std::move(spins)), reference_(std::move(reference)) {
    check_spin_count(spins_.size());
    std::set<std::string> seen;
    for (const auto& s : spins_) {
      if (s.label.empty()) throw InputError("spin label must not be empty");
      if (!seen.insert(s.label).second) throw InputError("duplicate spin label '" + s.label + "'");
      if (!std::isfinite(s.offset_hz)) throw InputError("offset of spin '" + s.label + "' is not finite");
    }
    const std::size_t ref = index_of(reference_);
    if (spins_[ref - 1].offset_hz != 0.0)
      throw InputError("reference spin '" + reference_ + "' must have zero offset");
    j_.assign(spins_.size(), std::vector<double>(spins_.size(), 0.0));
    std::vector<std::vector<bool>> declared(spins_.size(), std::vector<bool>(spins_.size(), false));
    for (const auto& c : couplings) {
      const std::size_t i = index_of(c.a) - 1, k = index_of(c.b) - 1;
      if (i == k) throw InputError("spin '" + c.a + "' cannot couple to itself");
      if (declared[i][k]) throw InputError("coupling " + c.a + "-" + c.b + " declared twice");
      if (!std::isfinite(c.hz)) throw InputError("coupling " + c.a + "-" + c.b + " is not finite");
      declared[i][k] = declared[k][i] = true;
      j_[i][k] = j_[k][i] = c.hz;
    }
    declared_ = std::move(declared);
  }

  std::size_t size() const noexcept { return spins_.size(); }
  const std::vector<Spin>& spins() const noexcept { return spins_; }
  const std::string& reference() const noexcept { return reference_; }
  const std::string& label(std::size_t k) const { return spins_.at(k - 1).label; }
  double offset_hz(std::size_t k) const { return spins_.at(k - 1).offset_hz; }
  double coupling_hz(std::size_t a, std::size_t b) const { return j_.at(a - 1).at(b - 1); }
  bool has_coupling(std::size_t a, std::size_t b) const { return declared_.at(a - 1).at(b - 1); }

  std::optional<std::size_t> find(const std::string& label) const {
    for (std::size_t k = 0; k < spins_.size(); ++k)
      if (spins_[k].label == label) return k + 1;
    return std::nullopt;
  }

  // Resolves a label to a 1-based index. A purely numeric label that is not
  // itself a spin label is taken as a 1-based index.
  std::size_t index_of(const std::string& label) const {
    if (auto k = find(label)) return *k;
    if (!label.empty() && label.find_first_not_of("0123456789") == std::string::npos && label.size() <= 2) {
      const std::size_t k = std::stoul(label);
      if (k >= 1 && k <= spins_.size()) return k;
    }
    throw InputError("unknown spin label '" + label + "'");
  }

  std::vector<Coupling> couplings() const {
    std::vector<Coupling> out;
    for (std::size_t i = 0; i < spins_.size(); ++i)
      for (std::size_t k = i + 1; k < spins_.size(); ++k)
        if (declared_[i][k]) out.push_back({spins_[i].label, spins_[k].label, j_[i][k]});
    return out;
  }

  SpinSystem with_offsets(const std::vector<double>& offsets_hz) const {
    if (offsets_hz.size() != spins_.size()) throw InputError("offset vector length mismatch");
    auto spins = spins_;
    for (std::size_t k = 0; k < spins.size(); ++k) spins[k].offset_hz = offsets_hz[k];
    return SpinSystem(std::move(spins), couplings(), reference_);
  }

  bool operator==(const SpinSystem& o) const {
    return spins_ == o.spins_ && reference_ == o.reference_ && j_ == o.j_ && declared_ == o.declared_;
  }

 private:
  std::vector<Spin> spins_;
  std::string reference_;
  std::vector<std::vector<double>> j_;
  std::vector<std::vector<bool>> declared_;
};

// ---------------------------------------------------------------------------
// Spin-system files (JSON): {"reference", "spins": [{"label","offset_hz"}],
// "couplings": [{"a","b","hz"}]}. Unknown fields are rejected.

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw InputError(where + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw InputError("unknown field '" + it.key() + "' in " + where);
  }
  for (const char* a : allowed)
    if (!obj.contains(a)) throw InputError("missing field '" + std::string(a) + "' in " + where);
}

template <class T>
T get_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InputError("field '" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

}  // namespace detail

inline SpinSystem spin_system_from_json(const nlohmann::json& doc) {
  detail::reject_unknown(doc, {"reference", "spins", "couplings"}, "spin system");
  if (!doc["spins"].is_array() || !doc["couplings"].is_array())
    throw InputError("'spins' and 'couplings' must be arrays");
  std::vector<Spin> spins;
  for (const auto& s : doc["spins"]) {
    detail::reject_unknown(s, {"label", "offset_hz"}, "spin entry");
    spins.push_back({detail::get_field<std::string>(s, "label", "spin entry"),
                     detail::get_field<double>(s, "offset_hz", "spin entry")});
  }
  std::vector<Coupling> couplings;
  for (const auto& c : doc["couplings"]) {
    detail::reject_unknown(c, {"a", "b", "hz"}, "coupling entry");
    couplings.push_back({detail::get_field<std::string>(c, "a", "coupling entry"),
                         detail::get_field<std::string>(c, "b", "coupling entry"),
                         detail::get_field<double>(c, "hz", "coupling entry")});
  }
  return SpinSystem(std::move(spins), couplings, detail::get_field<std::string>(doc, "reference", "spin system"));
}

inline SpinSystem parse_spin_system(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("spin system is not valid JSON: ") + e.what());
  }
  return spin_system_from_json(doc);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline SpinSystem load_spin_system(const std::string& path) {
  try {
    return parse_spin_system(read_text_file(path));
  } catch (const SyntaxError&) {
    throw;
  } catch (const InputError& e) {
    if (std::string(e.what()).find(path) != std::string::npos) throw;
    throw InputError(path + ": " + e.what());
  }
}

inline nlohmann::json to_json(const SpinSystem& sys) {
  nlohmann::json spins = nlohmann::json::array();
  for (const auto& s : sys.spins()) spins.push_back({{"label", s.label}, {"offset_hz", s.offset_hz}});
  nlohmann::json couplings = nlohmann::json::array();
  for (const auto& c : sys.couplings()) couplings.push_back({{"a", c.a}, {"b", c.b}, {"hz", c.hz}});
  return {{"reference", sys.reference()}, {"spins", spins}, {"couplings", couplings}};
}

// Built-in copies of the bundled data/systems files.
namespace systems {

// 13C-labelled chloroform: C observed, H partner. Each nucleus sits on
// resonance in its own channel.
inline SpinSystem chloroform() {
  return SpinSystem({{"C", 0.0}, {"H", 0.0}}, {{"C", "H", 215.0}}, "C");
}

// 13C2 trichloroethylene with its proton. Rotating frame at C2.
inline SpinSystem tce() {
  return SpinSystem({{"C1", -903.6}, {"C2", 0.0}, {"H", 0.0}},
                    {{"C1", "C2", 103.1}, {"C2", "H", 201.3}, {"C1", "H", 9.23}}, "C2");
}

// Uncoupled qubits for the abstract circuits: S, E1..En.
inline SpinSystem abstract_register(std::size_t env_count) {
  std::vector<Spin> spins{{"S", 0.0}};
  for (std::size_t k = 1; k <= env_count; ++k) spins.push_back({"E" + std::to_string(k), 0.0});
  return SpinSystem(std::move(spins), {}, "S");
}

}  // namespace systems

// ---------------------------------------------------------------------------

inline std::vector<std::size_t> resolve_labels(const SpinSystem& sys, const std::vector<std::string>& labels) {
  std::vector<std::size_t> out;
  for (const auto& l : labels) out.push_back(sys.index_of(l));
  return out;
}

// Diagonal (rad/s) of sum_i dw_i Iz_i + sum_{i<j} 2 pi J_ij Iz_i Iz_j with
// every term touching an excluded spin dropped.
inline std::vector<double> zeeman_coupling_energies(const SpinSystem& sys, const std::vector<std::string>& excluded = {}) {
  const std::size_t n = sys.size();
  std::vector<bool> skip(n + 1, false);
  for (std::size_t k : resolve_labels(sys, excluded)) skip[k] = true;
  const std::size_t dim = std::size_t{1} << n;
  std::vector<double> e(dim, 0.0);
  constexpr double two_pi = 2 * std::numbers::pi;
  for (std::size_t idx = 0; idx < dim; ++idx) {
    double s = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      if (skip[i]) continue;
      const double mi = spin_z_value(idx, i, n);
      s += two_pi * sys.offset_hz(i) * mi;
      for (std::size_t j = i + 1; j <= n; ++j)
        if (!skip[j]) s += two_pi * sys.coupling_hz(i, j) * mi * spin_z_value(idx, j, n);
    }
    e[idx] = s;
  }
  return e;
}

inline DensityMatrix pseudo_pure_down(std::size_t n) {
  if (n < 1) throw InputError("pseudo_pure_down needs at least one spin");
  check_spin_count(n);
  const std::size_t dim = std::size_t{1} << n;
  ComplexMatrix m(dim);
  m(dim - 1, dim - 1) = 1.0;
  return DensityMatrix(std::move(m), StateKind::TrueState, unchecked);
}

// rho_sys (x) (1/2)^(x env_count); environment spins are appended after the system.
inline DensityMatrix environment_mixed(const DensityMatrix& rho_sys, std::size_t env_count) {
  if (env_count < 1) throw InputError("environment_mixed needs at least one environment spin");
  check_spin_count(rho_sys.spin_count() + env_count);
  const ComplexMatrix mixed = 0.5 * ComplexMatrix::identity(2);
  ComplexMatrix env = mixed;
  for (std::size_t k = 1; k < env_count; ++k) env = kron(env, mixed);
  return DensityMatrix(kron(rho_sys.matrix(), env), rho_sys.kind(), unchecked);
}

// Partial trace over the decoupled spins (acquisition under decoupling).
inline DensityMatrix acquire_decoupled(const DensityMatrix& rho, const SpinSystem& sys,
                                       const std::vector<std::string>& decoupled) {
  if (rho.spin_count() != sys.size()) throw InputError("state does not match the spin system");
  const auto gone = resolve_labels(sys, decoupled);
  std::vector<std::size_t> keep;
  for (std::size_t k = 1; k <= sys.size(); ++k)
    if (std::find(gone.begin(), gone.end(), k) == gone.end()) keep.push_back(k);
  if (keep.empty()) throw InputError("cannot decouple every spin");
  if (keep.size() == sys.size()) return rho;
  return partial_trace(rho, keep);
}

// Doublet of `observed`, split by the |up>/|down> state of `partner`.
struct PeakPair {
  Complex low;   // partner |up>
  Complex high;  // partner |down>
  Complex sum() const { return low + high; }
};

// Receiver phase chosen so that the product-state experiment
// "[theta]x^2 - [pi/2]x^{1,2}" gives real, non-negative peaks.
inline const Complex kReceiverPhase{0.0, -1.0};

// Index form; any spin other than observed/partner is traced out first.
inline PeakPair peak_amplitudes(const DensityMatrix& rho, std::size_t observed, std::size_t partner) {
  const std::size_t n = rho.spin_count();
  check_spin_index(observed, n);
  check_spin_index(partner, n);
  if (observed == partner) throw InputError("observed and partner spins must differ");
  const std::vector<std::size_t> keep{std::min(observed, partner), std::max(observed, partner)};
  const DensityMatrix pair = n == 2 ? rho : partial_trace(rho, keep);
  const std::size_t obs = observed < partner ? 1 : 2;
  const std::size_t par = 3 - obs;
  const ComplexMatrix minus = embed(lowering(), obs, 2);
  const ComplexMatrix up = minus * embed(projector_up(), par, 2);
  const ComplexMatrix down = minus * embed(projector_down(), par, 2);
  const auto& m = pair.matrix();
  return {kReceiverPhase * (m * up).trace(), kReceiverPhase * (m * down).trace()};
}

inline PeakPair peak_amplitudes(const DensityMatrix& rho, const SpinSystem& sys, const std::string& observed,
                                const std::string& partner) {
  if (rho.spin_count() != sys.size()) throw InputError("state does not match the spin system");
  const std::size_t o = sys.index_of(observed), p = sys.index_of(partner);
  if (o == p) throw InputError("observed and partner label the same spin");
  return peak_amplitudes(rho, o, p);
}

}  // namespace nmrdeco
