#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "nmrdeco/experiments.hpp"
#include "nmrdeco/sinusoid_fit.hpp"

namespace nmrdeco {

struct Sample {
  double param = 0.0;
  Complex value;
  bool operator==(const Sample&) const = default;
};

struct SweepMetadata {
  std::string system;    // file path or built-in name
  std::string sequence;  // sequence text the scenario runs
  std::map<std::string, double> bindings;
  std::string unit;      // unit of the grid as given by the user
  bool operator==(const SweepMetadata&) const = default;
};

struct SweepResult {
  std::string scenario;
  std::string param_name;
  std::vector<Sample> samples;
  SweepMetadata metadata;
  bool operator==(const SweepResult&) const = default;

  std::vector<double> params() const {
    std::vector<double> out;
    for (const auto& s : samples) out.push_back(s.param);
    return out;
  }
};

// Parameter grid in SI units (radians or seconds); both ends inclusive.
struct Grid {
  double start = 0.0;
  double stop = 0.0;
  double step = 0.0;

  std::vector<double> points() const {
    if (!(step > 0)) throw InputError("grid step must be positive");
    if (!(start < stop)) throw InputError("grid start must be below stop");
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step * (1 + 1e-12))) + 1;
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = start + static_cast<double>(i) * step;
    return out;
  }
};

enum class Component { re, im, abs };

inline double component_of(Complex v, Component c) {
  switch (c) {
    case Component::re: return v.real();
    case Component::im: return v.imag();
    case Component::abs: return std::abs(v);
  }
  return v.real();
}

inline SinusoidFit fit_sinusoid(const SweepResult& data, Component use, const FitOptions& opt = {}) {
  std::vector<double> x, y;
  for (const auto& s : data.samples) {
    x.push_back(s.param);
    y.push_back(component_of(s.value, use));
  }
  return fit_sinusoid(x, y, opt);
}

// ---------------------------------------------------------------------------
// Scenario registry

struct ScenarioContext {
  std::optional<SpinSystem> system;
  std::string system_name;
  std::map<std::string, double> fixed;
};

struct ScenarioInfo {
  std::string name;
  std::string param;
  std::string description;
};

inline const std::vector<ScenarioInfo>& scenarios() {
  static const std::vector<ScenarioInfo> list{
      {"one-qubit", "theta", "coherence of the system spin after entangling with one environment spin"},
      {"n-env", "theta", "coherence after entangling with n_env environment qubits (brute force)"},
      {"product-low", "theta", "product-state control: low-frequency peak"},
      {"product-high", "theta", "product-state control: high-frequency peak"},
      {"product-sum", "theta", "product-state control: sum of both peaks"},
      {"entangled-sum", "theta", "entangled state: sum of both peaks"},
      {"dq", "t", "double-quantum coherence of the C1/C2 Bell state"},
      {"multi-env-dq", "t", "double-quantum coherence with environment couplings j1_k/j2_k"},
  };
  return list;
}

inline const ScenarioInfo& scenario_info(const std::string& name) {
  for (const auto& s : scenarios())
    if (s.name == name) return s;
  throw InputError("unknown scenario '" + name + "'");
}

namespace detail {

inline double fixed_or(const ScenarioContext& ctx, const std::string& key, double fallback) {
  auto it = ctx.fixed.find(key);
  return it == ctx.fixed.end() ? fallback : it->second;
}

inline std::size_t fixed_count(const ScenarioContext& ctx, const std::string& key, std::size_t fallback) {
  const double v = fixed_or(ctx, key, static_cast<double>(fallback));
  if (!(v >= 1) || v != std::floor(v)) throw InputError(key + " must be a positive integer");
  return static_cast<std::size_t>(v);
}

inline std::vector<experiments::EnvironmentCoupling> env_couplings(const ScenarioContext& ctx) {
  std::vector<experiments::EnvironmentCoupling> env;
  for (std::size_t k = 1;; ++k) {
    const auto j1 = ctx.fixed.find("j1_" + std::to_string(k));
    const auto j2 = ctx.fixed.find("j2_" + std::to_string(k));
    if (j1 == ctx.fixed.end() && j2 == ctx.fixed.end()) break;
    if (j1 == ctx.fixed.end() || j2 == ctx.fixed.end())
      throw InputError("environment spin " + std::to_string(k) + " needs both j1_k and j2_k");
    env.push_back({j1->second, j2->second});
  }
  if (env.empty()) throw InputError("multi-env-dq needs bindings j1_1, j2_1, ...");
  return env;
}

// First two spins of the system: observed and partner.
inline std::pair<std::string, std::string> pair_labels(const SpinSystem& sys) {
  if (sys.size() < 2) throw InputError("scenario needs a spin system with at least two spins");
  return {sys.label(1), sys.label(2)};
}

}  // namespace detail

// Evaluates a scenario at one parameter value and reports the sequence text it runs.
struct ScenarioPoint {
  Complex value;
  std::string sequence;
};

inline ScenarioPoint evaluate_scenario(const std::string& name, double param, const ScenarioContext& ctx) {
  namespace ex = experiments;
  if (name == "one-qubit") {
    if (!ctx.system) {
      return {ex::scenario_one_qubit(param).coherence, ex::hadamard_text("S") + " - " + ex::tilt_text("E1") + " - cnot(S,E1)"};
    }
    const auto [o, p] = detail::pair_labels(*ctx.system);
    const auto r = ex::scenario_nmr_entangled(*ctx.system, param, o, p);
    return {r.coherence, ex::entangle_text(o, p)};
  }
  if (name == "n-env") {
    const std::size_t n = detail::fixed_count(ctx, "n_env", 1);
    return {ex::scenario_n_environment(param, n).coherence_bruteforce, "network with " + std::to_string(n) + " environment qubits"};
  }
  if (name.starts_with("product-") || name == "entangled-sum") {
    const SpinSystem sys = ctx.system ? *ctx.system : systems::chloroform();
    const auto [o, p] = detail::pair_labels(sys);
    const bool product = name.starts_with("product-");
    const auto r = product ? ex::scenario_nmr_product(sys, param, o, p) : ex::scenario_nmr_entangled(sys, param, o, p);
    const std::string text = product ? ex::product_text(o, p) : ex::entangle_text(o, p);
    if (name == "product-low") return {r.peaks.low, text};
    if (name == "product-high") return {r.peaks.high, text};
    return {r.peaks.sum(), text};
  }
  if (name == "dq") {
    const SpinSystem sys = ctx.system ? *ctx.system : systems::tce();
    const auto [a, b] = detail::pair_labels(sys);
    const auto rho = ex::scenario_dq_evolution(sys, a, b, param, false);
    return {ex::double_quantum_coherence(rho), ex::dq_text(sys, a, b, false)};
  }
  if (name == "multi-env-dq") {
    const auto env = detail::env_couplings(ctx);
    const auto r = ex::scenario_multi_env_dq(param, env, detail::fixed_or(ctx, "j12", 103.1));
    return {r.bruteforce, "bell(S1,S2) - t with " + std::to_string(env.size()) + " environment spins"};
  }
  throw InputError("unknown scenario '" + name + "'");
}

// Grid points are evaluated concurrently; sample order always follows the grid.
inline SweepResult sweep(const std::string& scenario, const Grid& grid, const ScenarioContext& ctx,
                         unsigned threads = 0) {
  const ScenarioInfo& info = scenario_info(scenario);
  const auto points = grid.points();
  std::vector<Sample> samples(points.size());
  std::vector<std::string> texts(points.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, points.size()));

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      try {
        auto pt = evaluate_scenario(scenario, points[i], ctx);
        samples[i] = {points[i], pt.value};
        texts[i] = std::move(pt.sequence);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = points.size();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  SweepResult out;
  out.scenario = scenario;
  out.param_name = info.param;
  out.samples = std::move(samples);
  out.metadata.system = ctx.system_name;
  out.metadata.sequence = texts.front();
  out.metadata.bindings = ctx.fixed;
  return out;
}

// Adds zero-mean Gaussian noise of scale sigma * max|value| to the real and
// imaginary part of every sample. Point i draws from a generator seeded with
// (seed, i), so the output does not depend on evaluation order.
inline SweepResult inject_noise(const SweepResult& data, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0)) throw InputError("noise level must be non-negative");
  SweepResult out = data;
  if (sigma == 0.0) return out;
  double peak = 0.0;
  for (const auto& s : data.samples) peak = std::max(peak, std::abs(s.value));
  const double scale = sigma * peak;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(static_cast<std::uint64_t>(i) >> 32)};
    std::mt19937_64 gen(seq);
    std::normal_distribution<double> noise(0.0, scale);
    const double re = noise(gen);
    const double im = noise(gen);
    out.samples[i].value += Complex(re, im);
  }
  return out;
}

}  // namespace nmrdeco
