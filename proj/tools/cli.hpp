#pragma once

// Command-line front end. run() takes the argument list without the program
// name and writes to the given streams, so tests can drive it in-process.
//
// Exit status: 0 success, 1 input or syntax error, 2 invariant violation.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nmrdeco/nmrdeco.hpp"

namespace nmrdeco::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitInvariant = 2;

enum class Quantity { angle, time, any };

struct Measured {
  double value;
  std::string unit;  // empty when the text had no suffix
};

// "<number>[unit]" with unit in {deg, rad, s, ms, us}.
inline Measured parse_quantity(const std::string& text) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || !std::isfinite(v)) throw InputError("'" + text + "' is not a number");
  std::string unit(end);
  static const std::vector<std::string> known{"", "deg", "rad", "s", "ms", "us"};
  if (std::find(known.begin(), known.end(), unit) == known.end())
    throw InputError("unknown unit '" + unit + "' in '" + text + "'");
  return {v, unit};
}

inline Quantity quantity_of_unit(const std::string& unit) {
  if (unit == "deg" || unit == "rad") return Quantity::angle;
  if (unit == "s" || unit == "ms" || unit == "us") return Quantity::time;
  return Quantity::any;
}

// Converts to radians or seconds.
inline double to_si(double v, const std::string& unit) {
  if (unit == "deg") return v * std::numbers::pi / 180.0;
  if (unit == "ms") return v * 1e-3;
  if (unit == "us") return v * 1e-6;
  return v;
}

struct GridSpec {
  Grid grid;
  std::string unit;
};

// "start:stop:step[unit]". A unit on the step applies to fields without one.
inline GridSpec parse_grid(const std::string& text, Quantity expected) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const auto colon = text.find(':', start);
    parts.push_back(text.substr(start, colon == std::string::npos ? std::string::npos : colon - start));
    if (colon == std::string::npos) break;
    start = colon + 1;
  }
  if (parts.size() != 3) throw InputError("grid '" + text + "' must have the form start:stop:step[unit]");
  std::vector<Measured> q;
  for (const auto& p : parts) q.push_back(parse_quantity(p));
  const std::string fallback = q[2].unit;
  for (auto& x : q) {
    if (x.unit.empty()) x.unit = fallback;
    const Quantity kind = quantity_of_unit(x.unit);
    if (expected != Quantity::any && kind != Quantity::any && kind != expected)
      throw InputError("grid '" + text + "' uses unit '" + x.unit + "', which does not fit this scenario's parameter");
  }
  GridSpec g;
  g.grid = {to_si(q[0].value, q[0].unit), to_si(q[1].value, q[1].unit), to_si(q[2].value, q[2].unit)};
  g.unit = fallback.empty() ? (expected == Quantity::time ? "s" : expected == Quantity::angle ? "rad" : "") : fallback;
  g.grid.points();  // validates ordering and step
  return g;
}

// "sym=value[unit]"; angle and time units convert to SI.
inline std::map<std::string, double> parse_bindings(const std::vector<std::string>& items) {
  std::map<std::string, double> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw InputError("binding '" + item + "' must have the form symbol=value");
    const std::string name = item.substr(0, eq);
    if (out.contains(name)) throw InputError("symbol '" + name + "' is bound twice");
    const auto q = parse_quantity(item.substr(eq + 1));
    out[name] = to_si(q.value, q.unit);
  }
  return out;
}

inline bool is_builtin_system(const std::string& name) { return name == "chloroform" || name == "tce"; }

// A path to a spin-system file, or a built-in name ("chloroform", "tce").
inline SpinSystem resolve_system(const std::string& ref) {
  if (!std::filesystem::exists(ref) && is_builtin_system(ref))
    return ref == "chloroform" ? systems::chloroform() : systems::tce();
  if (!std::filesystem::exists(ref)) throw InputError("spin-system file '" + ref + "' does not exist");
  return load_spin_system(ref);
}

inline std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v == 0.0 ? 0.0 : v);
  return buf;
}

inline std::string matrix_text(const ComplexMatrix& m, bool imag) {
  std::string s;
  for (std::size_t r = 0; r < m.dim(); ++r) {
    for (std::size_t c = 0; c < m.dim(); ++c) {
      const double v = imag ? m(r, c).imag() : m(r, c).real();
      s += fmt(" %12.9f", std::abs(v) < 5e-13 ? 0.0 : v);
    }
    s += "\n";
  }
  return s;
}

inline nlohmann::ordered_json matrix_json(const ComplexMatrix& m, bool imag) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < m.dim(); ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < m.dim(); ++c) row.push_back(io::round12(imag ? m(r, c).imag() : m(r, c).real()));
    rows.push_back(row);
  }
  return rows;
}

inline void emit(const std::string& content, const std::string& out_path, std::ostream& out) {
  if (out_path.empty())
    out << content;
  else
    io::write_file_atomic(out_path, content);
}

// ---------------------------------------------------------------------------
// Commands

struct SimulateOptions {
  std::string system;
  std::string sequence;
  std::vector<std::string> bindings;
  std::optional<std::vector<std::string>> mixed;
  std::optional<std::vector<std::string>> traced;
  std::string out;
  std::string format = "text";
};

inline int simulate(const SimulateOptions& o, std::ostream& out) {
  const SpinSystem sys = resolve_system(o.system);
  const seq::PulseSequence program = seq::load_sequence(o.sequence);
  const auto bind = parse_bindings(o.bindings);
  const auto decoupled = seq::initially_decoupled(program);
  const auto mixed = o.mixed.value_or(decoupled);
  const auto traced = o.traced.value_or(decoupled);

  const DensityMatrix full = apply_all(experiments::initial_state(sys, mixed), seq::compile(program, sys, bind));
  full.validate();
  const DensityMatrix rho = acquire_decoupled(full, sys, traced);
  const auto traced_idx = resolve_labels(sys, traced);
  std::vector<std::string> kept;
  for (std::size_t k = 1; k <= sys.size(); ++k)
    if (std::find(traced_idx.begin(), traced_idx.end(), k) == traced_idx.end()) kept.push_back(sys.label(k));

  // Peaks of the first kept spin against each other kept spin.
  struct PeakRow {
    std::string observed, partner;
    PeakPair peaks;
  };
  std::vector<PeakRow> peaks;
  for (std::size_t j = 1; j < kept.size(); ++j)
    peaks.push_back({kept[0], kept[j], peak_amplitudes(full, sys, kept[0], kept[j])});
  const ComplexMatrix dev = rho.deviation_part();

  std::string s;
  if (o.format == "text") {
    s += "spins:";
    for (const auto& l : kept) s += " " + l;
    s += "\nsequence: " + seq::format(program) + "\n";
    s += "rho (real):\n" + matrix_text(rho.matrix(), false);
    s += "rho (imag):\n" + matrix_text(rho.matrix(), true);
    s += "deviation (real):\n" + matrix_text(dev, false);
    s += "deviation (imag):\n" + matrix_text(dev, true);
    for (const auto& p : peaks)
      s += "peaks " + p.observed + " split by " + p.partner + ": low " + fmt("%.9g", p.peaks.low.real()) +
           fmt("%+.9gi", p.peaks.low.imag()) + ", high " + fmt("%.9g", p.peaks.high.real()) +
           fmt("%+.9gi", p.peaks.high.imag()) + "\n";
  } else if (o.format == "json") {
    nlohmann::ordered_json doc;
    doc["spins"] = kept;
    doc["sequence"] = seq::format(program);
    doc["rho_re"] = matrix_json(rho.matrix(), false);
    doc["rho_im"] = matrix_json(rho.matrix(), true);
    doc["deviation_re"] = matrix_json(dev, false);
    doc["deviation_im"] = matrix_json(dev, true);
    nlohmann::ordered_json pk = nlohmann::ordered_json::array();
    for (const auto& p : peaks)
      pk.push_back({{"observed", p.observed},
                    {"partner", p.partner},
                    {"low_re", io::round12(p.peaks.low.real())},
                    {"low_im", io::round12(p.peaks.low.imag())},
                    {"high_re", io::round12(p.peaks.high.real())},
                    {"high_im", io::round12(p.peaks.high.imag())}});
    doc["peaks"] = pk;
    s = doc.dump(2) + "\n";
  } else if (o.format == "csv") {
    s = "row,col,re,im\n";
    for (std::size_t r = 0; r < rho.dim(); ++r)
      for (std::size_t c = 0; c < rho.dim(); ++c)
        s += std::to_string(r) + "," + std::to_string(c) + "," + io::number12(rho(r, c).real()) + "," +
             io::number12(rho(r, c).imag()) + "\n";
  } else {
    throw InputError("unknown output format '" + o.format + "' (expected text, csv or json)");
  }
  emit(s, o.out, out);
  return kExitOk;
}

struct SweepOptions {
  std::string scenario;
  std::string system;
  std::string grid;
  std::vector<std::string> bindings;
  std::string out;
  std::string format = "csv";
  std::uint64_t seed = 0;
  double noise = 0.0;
  unsigned threads = 0;
};

inline int run_sweep(const SweepOptions& o, std::ostream& out) {
  const ScenarioInfo& info = scenario_info(o.scenario);
  const io::Format format = io::format_from_name(o.format);
  ScenarioContext ctx;
  if (!o.system.empty()) {
    ctx.system = resolve_system(o.system);
    ctx.system_name = o.system;
  }
  ctx.fixed = parse_bindings(o.bindings);
  const GridSpec g = parse_grid(o.grid, info.param == "t" ? Quantity::time : Quantity::angle);
  SweepResult r = sweep(o.scenario, g.grid, ctx, o.threads);
  r.metadata.unit = g.unit;
  if (o.noise != 0.0) r = inject_noise(r, o.noise, o.seed);
  emit(io::encode_sweep(r, format), o.out, out);
  return kExitOk;
}

struct FitOptionsCli {
  std::string in;
  std::string use = "re";
  std::string out;
  std::string format = "json";
};

inline Component component_from_name(const std::string& s) {
  if (s == "re") return Component::re;
  if (s == "im") return Component::im;
  if (s == "abs") return Component::abs;
  throw InputError("unknown component '" + s + "' (expected re, im or abs)");
}

inline int run_fit(const FitOptionsCli& o, std::ostream& out) {
  if (!std::filesystem::exists(o.in)) throw InputError("sweep file '" + o.in + "' does not exist");
  const io::Format format = io::format_from_name(o.format);
  SweepResult data;
  try {
    data = io::decode_sweep(read_text_file(o.in));
  } catch (const InputError& e) {
    throw InputError(o.in + ": " + e.what());
  }
  const SinusoidFit f = fit_sinusoid(data, component_from_name(o.use));
  emit(io::encode_fit(f, format), o.out, out);
  return kExitOk;
}

struct OracleOptions {
  std::string out;
  std::uint64_t seed = 1;
};

struct OracleSuite {
  std::string name;
  std::size_t cases = 0;
  double max_deviation = 0.0;
  double tolerance = 1e-9;
};

inline std::vector<OracleSuite> oracle_suites(std::uint64_t seed) {
  std::vector<OracleSuite> suites;

  OracleSuite nenv{"n-environment sin^N", 0, 0.0};
  for (std::size_t n = 1; n <= 8; ++n)
    for (int k = 0; k < 37; ++k) {
      const double theta = k * 10.0 * std::numbers::pi / 180.0;
      const auto r = experiments::scenario_n_environment(theta, n);
      nenv.max_deviation = std::max(nenv.max_deviation, std::abs(r.coherence_bruteforce - r.coherence_closed));
      ++nenv.cases;
    }
  suites.push_back(nenv);

  OracleSuite dq{"double-quantum cos(phi13+phi23)", 0, 0.0};
  const SpinSystem tce = systems::tce();
  const double j13 = tce.coupling_hz(tce.index_of("C1"), tce.index_of("H"));
  const double j23 = tce.coupling_hz(tce.index_of("C2"), tce.index_of("H"));
  for (int k = 0; k <= 40; ++k) {
    const double t = k * 0.5e-3;
    const double sim = experiments::double_quantum_coherence(experiments::scenario_dq_evolution(t, false));
    dq.max_deviation = std::max(dq.max_deviation, std::abs(sim - experiments::closed_form_dq(j13, j23, t)));
    ++dq.cases;
  }
  suites.push_back(dq);

  OracleSuite multi{"multi-environment product of cosines", 0, 0.0};
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> coupling(5.0, 250.0);
  for (std::size_t n = 2; n <= 4; ++n) {
    std::vector<experiments::EnvironmentCoupling> env;
    for (std::size_t k = 0; k < n; ++k) env.push_back({coupling(gen), coupling(gen)});
    for (int k = 0; k <= 20; ++k) {
      const auto r = experiments::scenario_multi_env_dq(k * 1e-3, env);
      multi.max_deviation = std::max(multi.max_deviation, std::abs(r.bruteforce - r.closed));
      ++multi.cases;
    }
  }
  suites.push_back(multi);
  return suites;
}

inline int oracle_check(const OracleOptions& o, std::ostream& out) {
  const auto suites = oracle_suites(o.seed);
  bool ok = true;
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& s : suites) {
    const bool pass = s.max_deviation <= s.tolerance;
    ok = ok && pass;
    out << (pass ? "PASS " : "FAIL ") << s.name << ": " << s.cases << " cases, max deviation "
        << fmt("%.3e", s.max_deviation) << " (tolerance " << fmt("%.0e", s.tolerance) << ")\n";
    doc.push_back({{"suite", s.name},
                   {"cases", s.cases},
                   {"max_deviation", s.max_deviation},
                   {"tolerance", s.tolerance},
                   {"pass", pass}});
  }
  if (!o.out.empty()) io::write_file_atomic(o.out, doc.dump(2) + "\n");
  return ok ? kExitOk : kExitInvariant;
}

// ---------------------------------------------------------------------------

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Decoherence experiments on NMR spin systems: simulate, sweep, fit, oracle-check."};
  app.name("nmrdeco");
  app.require_subcommand(1);

  SimulateOptions sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Run a pulse sequence and print the final state and peaks");
  simulate_cmd->add_option("--system", sim.system, "Spin-system file or built-in name (chloroform, tce)")->required();
  simulate_cmd->add_option("--sequence", sim.sequence, "Pulse-sequence file")->required();
  simulate_cmd->add_option("--bind", sim.bindings, "symbol=value[unit], repeatable");
  simulate_cmd->add_option("--out", sim.out, "Output file (default: stdout)");
  simulate_cmd->add_option("--format", sim.format, "text, csv or json")->capture_default_str();
  std::vector<std::string> mixed, traced;
  auto* mixed_opt = simulate_cmd->add_option("--mixed", mixed, "Spins that start maximally mixed")->delimiter(',');
  auto* traced_opt = simulate_cmd->add_option("--trace", traced, "Spins traced out before printing")->delimiter(',');

  SweepOptions sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate a scenario over a parameter grid");
  sweep_cmd->add_option("--scenario", sw.scenario, "Scenario name")->required();
  sweep_cmd->add_option("--system", sw.system, "Spin-system file or built-in name");
  sweep_cmd->add_option("--grid", sw.grid, "start:stop:step[unit] (deg, rad, s, ms, us)")->required();
  sweep_cmd->add_option("--bind", sw.bindings, "Fixed parameter symbol=value, repeatable");
  sweep_cmd->add_option("--out", sw.out, "Output file (default: stdout)");
  sweep_cmd->add_option("--format", sw.format, "csv or json")->capture_default_str();
  sweep_cmd->add_option("--seed", sw.seed, "Noise seed")->capture_default_str();
  sweep_cmd->add_option("--noise", sw.noise, "Relative Gaussian noise level")->capture_default_str();
  sweep_cmd->add_option("--threads", sw.threads, "Worker threads (0 = hardware)")->capture_default_str();

  FitOptionsCli fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a sinusoid to a sweep file");
  fit_cmd->add_option("input,--in", fit.in, "Sweep file (CSV or JSON)")->required();
  fit_cmd->add_option("--use", fit.use, "re, im or abs")->capture_default_str();
  fit_cmd->add_option("--out", fit.out, "Output file (default: stdout)");
  fit_cmd->add_option("--format", fit.format, "csv or json")->capture_default_str();

  OracleOptions oc;
  auto* oracle_cmd = app.add_subcommand("oracle-check", "Compare closed forms with brute-force simulation");
  oracle_cmd->add_option("--out", oc.out, "JSON report file");
  oracle_cmd->add_option("--seed", oc.seed, "Seed for the random couplings")->capture_default_str();

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*simulate_cmd) {
      if (*mixed_opt) sim.mixed = mixed;
      if (*traced_opt) sim.traced = traced;
      return simulate(sim, out);
    }
    if (*sweep_cmd) return run_sweep(sw, out);
    if (*fit_cmd) return run_fit(fit, out);
    return oracle_check(oc, out);
  } catch (const InvariantViolation& e) {
    err << "invariant violation: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const SyntaxError& e) {
    err << "syntax error: " << e.what() << "\n";
    return kExitInput;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInvariant;
  }
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace nmrdeco::cli
