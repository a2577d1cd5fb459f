#pragma once

// CSV and JSON encodings of sweeps and fits.
//
// CSV: header "param,value_re,value_im", '.' decimal separator, 12 significant
// digits. JSON carries the same numbers, rounded to the same 12 digits, plus
// the sweep metadata.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "nmrdeco/sweep.hpp"

namespace nmrdeco::io {

enum class Format { csv, json };

inline Format format_from_name(const std::string& s) {
  if (s == "csv") return Format::csv;
  if (s == "json") return Format::json;
  throw InputError("unknown output format '" + s + "' (expected csv or json)");
}

inline std::string number12(double v) {
  if (v == 0.0) return "0";  // folds -0
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline double round12(double v) { return std::stod(number12(v)); }

inline void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write file '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) throw InputError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw InputError("cannot move output into place at '" + path + "': " + ec.message());
  }
}

// ---------------------------------------------------------------------------
// Sweeps

inline std::string sweep_to_csv(const SweepResult& r) {
  std::string s = "param,value_re,value_im\n";
  for (const auto& x : r.samples)
    s += number12(x.param) + "," + number12(x.value.real()) + "," + number12(x.value.imag()) + "\n";
  return s;
}

inline nlohmann::ordered_json sweep_to_json(const SweepResult& r) {
  nlohmann::ordered_json samples = nlohmann::ordered_json::array();
  for (const auto& x : r.samples)
    samples.push_back(
        {{"param", round12(x.param)}, {"value_re", round12(x.value.real())}, {"value_im", round12(x.value.imag())}});
  nlohmann::ordered_json bindings = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.metadata.bindings) bindings[k] = v;
  return {{"scenario", r.scenario},
          {"param_name", r.param_name},
          {"samples", samples},
          {"metadata",
           {{"system", r.metadata.system},
            {"sequence", r.metadata.sequence},
            {"bindings", bindings},
            {"unit", r.metadata.unit}}}};
}

inline std::string encode_sweep(const SweepResult& r, Format f) {
  return f == Format::csv ? sweep_to_csv(r) : sweep_to_json(r).dump(2) + "\n";
}

inline SweepResult sweep_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  SweepResult r;
  r.param_name = "param";
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line != "param,value_re,value_im") throw InputError("CSV header must be 'param,value_re,value_im'");
      continue;
    }
    if (std::count(line.begin(), line.end(), ',') != 2)
      throw InputError("CSV line " + std::to_string(lineno) + ": expected 3 columns");
    double v[3];
    std::size_t start = 0;
    for (int k = 0; k < 3; ++k) {
      const std::size_t end = k < 2 ? line.find(',', start) : line.size();
      if (end == std::string::npos) throw InputError("CSV line " + std::to_string(lineno) + ": expected 3 columns");
      const std::string cell = line.substr(start, end - start);
      try {
        std::size_t used = 0;
        v[k] = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw InputError("CSV line " + std::to_string(lineno) + ": '" + cell + "' is not a number");
      }
      start = end + 1;
    }
    r.samples.push_back({v[0], Complex(v[1], v[2])});
  }
  if (lineno == 0) throw InputError("CSV file is empty");
  return r;
}

inline SweepResult sweep_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
    SweepResult r;
    r.scenario = doc.at("scenario").get<std::string>();
    r.param_name = doc.at("param_name").get<std::string>();
    for (const auto& s : doc.at("samples"))
      r.samples.push_back({s.at("param").get<double>(),
                           Complex(s.at("value_re").get<double>(), s.at("value_im").get<double>())});
    if (doc.contains("metadata")) {
      const auto& m = doc["metadata"];
      r.metadata.system = m.value("system", "");
      r.metadata.sequence = m.value("sequence", "");
      r.metadata.unit = m.value("unit", "");
      if (m.contains("bindings"))
        for (const auto& [k, v] : m["bindings"].items()) r.metadata.bindings[k] = v.get<double>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed sweep JSON: ") + e.what());
  }
}

inline void check_sweep(const SweepResult& r) {
  if (r.samples.empty()) throw InputError("sweep has no samples");
  for (std::size_t i = 1; i < r.samples.size(); ++i)
    if (!(r.samples[i].param > r.samples[i - 1].param)) throw InputError("sweep parameters must be strictly increasing");
}

// Detects the encoding from the first non-blank character.
inline SweepResult decode_sweep(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  SweepResult r = (first != std::string::npos && text[first] == '{') ? sweep_from_json(text) : sweep_from_csv(text);
  check_sweep(r);
  return r;
}

// ---------------------------------------------------------------------------
// Fits

inline nlohmann::ordered_json fit_to_json(const SinusoidFit& f) {
  return {{"amplitude", round12(f.amplitude)},
          {"period", round12(f.period)},
          {"phase", round12(f.phase)},
          {"offset", round12(f.offset)},
          {"rms_residual", round12(f.rms_residual)}};
}

inline std::string encode_fit(const SinusoidFit& f, Format fmt) {
  if (fmt == Format::json) return fit_to_json(f).dump(2) + "\n";
  return "amplitude,period,phase,offset,rms_residual\n" + number12(f.amplitude) + "," + number12(f.period) + "," +
         number12(f.phase) + "," + number12(f.offset) + "," + number12(f.rms_residual) + "\n";
}

}  // namespace nmrdeco::io
