#pragma once

#include <openssl/evp.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "hbar/correctors.hpp"
#include "hbar/effective.hpp"
#include "hbar/error.hpp"
#include "hbar/flatset.hpp"
#include "hbar/hamiltonian.hpp"
#include "hbar/pde_oracle.hpp"
#include "hbar/potential.hpp"

namespace hbar::io {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

struct RunOptions {
  std::uint64_t seed = 1;
  double window = 2.0e4;
  std::size_t realizations = 16;
  std::size_t samples = 2000;  // event-mode draws
  unsigned jobs = 1;
  std::string output_dir = "out";
  int theta_points = 201;
  double theta_pad = 1.0;
  int lambda_nodes = 48;
  std::string mode = "auto";  // interior flats: auto | gap | both
  std::optional<std::vector<double>> closed_form_override;
  // oracle
  double dx = 1e-3;
  double T = 50.0;
  double R = 0.0;
  double tolerance = 2e-2;
  std::size_t oracle_realizations = 8;
  std::vector<double> probes;
  // corrector
  std::string recipe;
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double epsilon = std::numeric_limits<double>::quiet_NaN();
  int branch = 0;
  double half_width = 4.0;
  int points = 801;
};

struct Config {
  std::string source;
  json raw;
  DoubleWellSpec g;
  PotentialProcess v;
  double beta;
  RunOptions run;

  EffectiveOptions effective() const {
    EffectiveOptions o;
    o.realizations = run.realizations;
    o.window = run.window;
    o.seed = run.seed;
    o.jobs = run.jobs;
    o.lambda_nodes = run.lambda_nodes;
    return o;
  }
};

namespace detail {

inline void allow_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) fail(ErrorKind::Config, where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) fail(ErrorKind::Config, "unknown key '" + it.key() + "' in " + where);
}

template <class T>
T get(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) fail(ErrorKind::Config, "missing key '" + key + "' in " + where);
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, where + "." + key + ": " + e.what());
  }
}

template <class T>
T get_or(const json& obj, const std::string& key, T fallback, const std::string& where) {
  return obj.contains(key) ? get<T>(obj, key, where) : fallback;
}

inline std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

inline Marginal parse_marginal(const json& j, const std::string& where) {
  allow_keys(j, {"atoms", "uniform"}, where);
  Marginal mu;
  for (const auto& a : get_or<json>(j, "atoms", json::array(), where)) {
    if (!a.is_array() || a.size() != 2) fail(ErrorKind::Config, where + ".atoms entries must be [value, prob]");
    mu.atoms.push_back({a[0].get<double>(), a[1].get<double>()});
  }
  if (j.contains("uniform")) {
    const json& u = j.at("uniform");
    allow_keys(u, {"lo", "hi", "weight"}, where + ".uniform");
    mu.cont_lo = get<double>(u, "lo", where + ".uniform");
    mu.cont_hi = get<double>(u, "hi", where + ".uniform");
    mu.cont_weight = get<double>(u, "weight", where + ".uniform");
  }
  return mu;
}

}  // namespace detail

inline DoubleWellSpec parse_hamiltonian(const json& h) {
  const std::string w = "hamiltonian";
  detail::allow_keys(h, {"family", "m", "M", "p_m", "p_M", "c", "table", "left_slope", "right_slope", "mirror"}, w);
  auto family = detail::get_or<std::string>(h, "family", "piecewise_linear", w);
  std::optional<DoubleWellSpec> g;
  if (family == "piecewise_linear") {
    g = DoubleWellSpec::piecewise_linear(detail::get<double>(h, "m", w), detail::get<double>(h, "M", w),
                                         detail::get_or<double>(h, "p_m", -2.0, w),
                                         detail::get_or<double>(h, "p_M", -1.0, w),
                                         detail::get_or<double>(h, "left_slope", 1.0, w),
                                         detail::get_or<double>(h, "right_slope", 1.0, w));
  } else if (family == "quartic") {
    g = DoubleWellSpec::quartic(detail::get<double>(h, "p_m", w), detail::get<double>(h, "p_M", w),
                                detail::get<double>(h, "c", w));
  } else if (family == "tabulated") {
    std::vector<std::pair<double, double>> t;
    for (const auto& row : detail::get<json>(h, "table", w)) {
      if (!row.is_array() || row.size() != 2) fail(ErrorKind::Config, "hamiltonian.table rows must be [p, G]");
      t.emplace_back(row[0].get<double>(), row[1].get<double>());
    }
    g = DoubleWellSpec::tabulated(std::move(t));
  } else {
    fail(ErrorKind::Config, "unknown hamiltonian family '" + family + "'");
  }
  if (detail::get_or<bool>(h, "mirror", false, w)) g = g->mirror();
  return *g;
}

inline PotentialProcess parse_potential(const json& p) {
  const std::string w = "potential";
  detail::allow_keys(p, {"kind", "beta", "period", "knots", "mu", "mu1", "mu2", "c"}, w);
  auto kind = detail::get<std::string>(p, "kind", w);
  if (kind == "periodic") {
    std::vector<std::pair<double, double>> knots;
    for (const auto& k : detail::get<json>(p, "knots", w)) {
      if (!k.is_array() || k.size() != 2) fail(ErrorKind::Config, "potential.knots entries must be [z, v]");
      knots.emplace_back(k[0].get<double>(), k[1].get<double>());
    }
    return PotentialProcess::periodic(std::move(knots), detail::get_or<double>(p, "period", 1.0, w));
  }
  if (kind == "triangle") return PotentialProcess::periodic({{0.0, 1.0}, {0.5, 0.0}});
  if (kind == "iid") return PotentialProcess::iid(detail::parse_marginal(detail::get<json>(p, "mu", w), "potential.mu"));
  if (kind == "markov")
    return PotentialProcess::markov(detail::parse_marginal(detail::get<json>(p, "mu1", w), "potential.mu1"),
                                    detail::parse_marginal(detail::get<json>(p, "mu2", w), "potential.mu2"),
                                    detail::get<double>(p, "c", w));
  fail(ErrorKind::Config, "unknown potential kind '" + kind + "'");
}

inline RunOptions parse_run(const json& r) {
  const std::string w = "run";
  detail::allow_keys(r, {"seed", "window", "realizations", "samples", "jobs", "output_dir", "theta_points", "theta_pad",
                         "lambda_nodes", "mode", "closed_form_override", "dx", "T", "R", "tolerance",
                         "oracle_realizations", "probes", "recipe", "lambda", "epsilon", "branch", "half_width",
                         "points"},
                     w);
  RunOptions o;
  o.seed = detail::get_or<std::uint64_t>(r, "seed", o.seed, w);
  o.window = detail::get_or<double>(r, "window", o.window, w);
  o.realizations = detail::get_or<std::size_t>(r, "realizations", o.realizations, w);
  o.samples = detail::get_or<std::size_t>(r, "samples", o.samples, w);
  o.jobs = detail::get_or<unsigned>(r, "jobs", o.jobs, w);
  o.output_dir = detail::get_or<std::string>(r, "output_dir", o.output_dir, w);
  o.theta_points = detail::get_or<int>(r, "theta_points", o.theta_points, w);
  o.theta_pad = detail::get_or<double>(r, "theta_pad", o.theta_pad, w);
  o.lambda_nodes = detail::get_or<int>(r, "lambda_nodes", o.lambda_nodes, w);
  o.mode = detail::get_or<std::string>(r, "mode", o.mode, w);
  if (o.mode != "auto" && o.mode != "gap" && o.mode != "both")
    fail(ErrorKind::Config, "run.mode must be auto, gap or both");
  if (r.contains("closed_form_override"))
    o.closed_form_override = detail::get<std::vector<double>>(r, "closed_form_override", w);
  o.dx = detail::get_or<double>(r, "dx", o.dx, w);
  o.T = detail::get_or<double>(r, "T", o.T, w);
  o.R = detail::get_or<double>(r, "R", o.R, w);
  o.tolerance = detail::get_or<double>(r, "tolerance", o.tolerance, w);
  o.oracle_realizations = detail::get_or<std::size_t>(r, "oracle_realizations", o.oracle_realizations, w);
  o.probes = detail::get_or<std::vector<double>>(r, "probes", o.probes, w);
  o.recipe = detail::get_or<std::string>(r, "recipe", o.recipe, w);
  if (r.contains("lambda")) o.lambda = detail::get<double>(r, "lambda", w);
  if (r.contains("epsilon")) o.epsilon = detail::get<double>(r, "epsilon", w);
  o.branch = detail::get_or<int>(r, "branch", o.branch, w);
  o.half_width = detail::get_or<double>(r, "half_width", o.half_width, w);
  o.points = detail::get_or<int>(r, "points", o.points, w);
  if (o.realizations < 2) fail(ErrorKind::Config, "run.realizations must be at least 2");
  if (!(o.window > 0.0)) fail(ErrorKind::Config, "run.window must be positive");
  if (o.theta_points < 2) fail(ErrorKind::Config, "run.theta_points must be at least 2");
  return o;
}

inline Config parse_config(const std::string& text, const std::string& source = "<config>") {
  json raw;
  try {
    raw = json::parse(text);
  } catch (const json::parse_error& e) {
    auto [line, col] = detail::line_column(text, e.byte);
    fail(ErrorKind::Config, source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": malformed JSON");
  }
  detail::allow_keys(raw, {"hamiltonian", "potential", "run"}, "config");
  const json& p = detail::get<json>(raw, "potential", "config");
  double beta = detail::get<double>(p, "beta", "potential");
  if (!(beta > 0.0)) fail(ErrorKind::Config, "potential.beta must be positive");
  return Config{source, raw, parse_hamiltonian(detail::get<json>(raw, "hamiltonian", "config")), parse_potential(p),
                beta, parse_run(detail::get_or<json>(raw, "run", json::object(), "config"))};
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

// ---- manifest ----

struct RunManifest {
  std::string config_path;
  std::string command;
  std::uint64_t seed = 1;
  std::string output_dir;
  std::string tool_version = kToolVersion;
  std::string timestamp;
  json effective;  // parsed config after overrides

  // The timestamp is left out so reruns of the same manifest hash identically.
  json hashed_fields() const {
    return json{{"config_path", config_path}, {"command", command},           {"seed", seed},
                {"output_dir", output_dir},   {"tool_version", tool_version}, {"effective", effective}};
  }
};

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorKind::Config, "sha256 failed");
  std::string out;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    out += buf;
  }
  return out;
}

inline std::string manifest_hash(const RunManifest& m) { return sha256_hex(m.hashed_fields().dump()).substr(0, 16); }

inline json manifest_json(const RunManifest& m) {
  json j = m.hashed_fields();
  j["timestamp"] = m.timestamp;
  j["hash"] = manifest_hash(m);
  return j;
}

// ---- CSV ----

inline std::string fmt17(double x) {
  if (std::isnan(x)) return "";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

using Cell = std::variant<double, long long, std::string>;

inline std::string csv_field(const Cell& c) {
  if (auto d = std::get_if<double>(&c)) return fmt17(*d);
  if (auto i = std::get_if<long long>(&c)) return std::to_string(*i);
  const std::string& s = std::get<std::string>(c);
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

class CsvWriter {
 public:
  CsvWriter(std::ostream& os, const std::vector<std::string>& header) : os_(os), width_(header.size()) {
    std::vector<Cell> h(header.begin(), header.end());
    row(h);
  }
  void row(const std::vector<Cell>& cells) {
    if (cells.size() != width_) fail(ErrorKind::Config, "CSV row width does not match the header");
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << csv_field(cells[i]);
    os_ << "\r\n";
  }

 private:
  std::ostream& os_;
  std::size_t width_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) fail(ErrorKind::Config, "cannot write " + p.string());
  out << content;
}

inline std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

// ---- payloads ----

inline std::string curve_csv(const EffectiveCurve& c, const std::string& hash) {
  std::ostringstream os;
  CsvWriter w(os, {"theta", "hbar", "std_err", "label", "height", "manifest_hash"});
  for (std::size_t k = 0; k < c.size(); ++k)
    w.row({c.theta[k], c.hbar[k], c.std_err[k], std::string(to_string(c.labels[k])), c.heights[k], hash});
  return os.str();
}

inline json breakpoints_json(const EffectiveCurve& c, const std::string& hash) {
  json bp = json::array();
  for (const CurveBreakpoint& b : c.breakpoints) bp.push_back({{"name", b.name}, {"theta", b.theta}, {"std_err", b.std_err}});
  return {{"regime", to_string(c.regime)}, {"beta", c.beta},   {"hamiltonian", c.g_id}, {"potential", c.v_id},
          {"mirrored", c.mirrored},        {"breakpoints", bp}, {"manifest_hash", hash}};
}

inline json evidence_json(const FlatEvidence& e) {
  json j{{"kind", to_string(e.kind)}, {"tag", e.tag}};
  switch (e.kind) {
    case EvidenceKind::InteriorGap:
      j["theta_lower"] = e.lo;
      j["theta_upper"] = e.hi;
      j["gap"] = e.value;
      j["gap_std_err"] = e.std_err;
      break;
    case EvidenceKind::InteriorEvent:
      j["p_hat"] = e.value;
      j["ci"] = {e.lo, e.hi};
      break;
    default:
      break;
  }
  return j;
}

inline json flat_report_json(const FlatPieceReport& r, const std::string& hash) {
  json entries = json::array();
  for (const FlatHeight& h : r.entries) {
    json ev = json::array(), iv = json::array();
    for (const auto& e : h.evidence) ev.push_back(evidence_json(e));
    for (const auto& [a, b] : h.theta_intervals) iv.push_back({a, b});
    entries.push_back({{"lambda", h.lambda}, {"evidence", ev}, {"theta_intervals", iv}});
  }
  return {{"regime", to_string(r.regime)}, {"beta", r.beta}, {"heights", r.heights}, {"entries", entries},
          {"manifest_hash", hash}};
}

inline std::string validation_csv(const ValidationTable& t, const std::string& hash) {
  std::ostringstream os;
  CsvWriter w(os, {"theta", "curve_value", "oracle", "error_bar", "err", "pass", "manifest_hash"});
  for (const ProbeResult& p : t.rows)
    w.row({p.theta, p.curve, p.oracle, p.error_bar, p.err, static_cast<long long>(p.pass), hash});
  return os.str();
}

inline std::string eps_csv(const std::vector<EpsRow>& rows, const std::string& hash) {
  std::ostringstream os;
  CsvWriter w(os, {"inverse_eps", "eps_u", "err", "manifest_hash"});
  for (const EpsRow& r : rows) w.row({r.inverse_eps, r.scaled, r.err, hash});
  return os.str();
}

inline std::string corrector_csv(const PiecewiseCorrector& f, int points, const std::string& hash) {
  std::ostringstream os;
  CsvWriter w(os, {"x", "f", "slope", "V", "manifest_hash"});
  const double a = f.lo(), b = f.hi();
  for (int k = 0; k < points; ++k) {
    double x = a + (b - a) * k / (points - 1.0);
    w.row({x, f.value(x), f.derivative(x, k + 1 < points), f.path().value_unchecked(x), hash});
  }
  return os.str();
}

inline json viscosity_json(const ViscosityReport& r, Role role, const std::string& recipe, const std::string& hash) {
  json j{{"recipe", recipe}, {"max_residual", r.max_residual}, {"points_checked", r.points_checked},
         {"kinks", r.kinks.size()}, {"manifest_hash", hash}};
  j["sub"] = role == Role::Super ? json(nullptr) : json(r.sub_level);
  j["super"] = role == Role::Sub ? json(nullptr) : json(r.super_level);
  return j;
}

}  // namespace hbar::io
