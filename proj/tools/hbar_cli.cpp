// hbar_cli: effective Hamiltonian curves, flat sets, oracle validation and corrector certificates.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "hbar/io.hpp"

using namespace hbar;
using namespace hbar::io;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> window;
  std::optional<std::size_t> samples;
  std::optional<unsigned> jobs;
  std::optional<std::string> out;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("config", c.config, "JSON config file")->required();
  sub->add_option("--seed", c.seed, "override run.seed");
  sub->add_option("--window", c.window, "override run.window");
  sub->add_option("--samples", c.samples, "override run.samples");
  sub->add_option("--jobs", c.jobs, "worker threads");
  sub->add_option("--out", c.out, "output directory");
}

std::string utc_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Loads the file, folds CLI overrides into its run section and re-parses.
Config load(const Common& c, const std::function<void(json&)>& extra = {}) {
  Config base = load_config(c.config);
  json raw = base.raw;
  json& run = raw["run"];
  if (!run.is_object()) run = json::object();
  if (c.seed) run["seed"] = *c.seed;
  if (c.window) run["window"] = *c.window;
  if (c.samples) run["samples"] = *c.samples;
  if (c.jobs) run["jobs"] = *c.jobs;
  if (c.out) run["output_dir"] = *c.out;
  if (extra) extra(run);
  return parse_config(raw.dump(), c.config);
}

RunManifest manifest_for(const Config& cfg, const std::string& command) {
  RunManifest m;
  m.config_path = cfg.source;
  m.command = command;
  m.seed = cfg.run.seed;
  m.output_dir = cfg.run.output_dir;
  m.timestamp = utc_now();
  m.effective = cfg.raw;
  return m;
}

std::filesystem::path out_path(const Config& cfg, const std::string& name) {
  return std::filesystem::path(cfg.run.output_dir) / name;
}

void write_manifest(const Config& cfg, const RunManifest& m) {
  write_file(out_path(cfg, "manifest_" + m.command + ".json"), dump_json(manifest_json(m)));
}

std::vector<double> curve_grid(const EffectiveModel& model, const Config& cfg, bool mirrored) {
  std::vector<double> grid = default_theta_grid(model, cfg.run.theta_points, cfg.run.theta_pad);
  if (mirrored) {
    for (double& t : grid) t = -t;
    std::sort(grid.begin(), grid.end());
  }
  return grid;
}

int cmd_curve(const Common& c) {
  Config cfg = load(c);
  RunManifest man = manifest_for(cfg, "curve");
  const std::string h = manifest_hash(man);
  EffectiveModel model(cfg.g, cfg.v, cfg.beta, cfg.effective());
  EffectiveCurve curve = assemble_curve(model, curve_grid(model, cfg, cfg.g.reflected()), cfg.g.reflected());
  write_file(out_path(cfg, "curve.csv"), curve_csv(curve, h));
  write_file(out_path(cfg, "breakpoints.json"), dump_json(breakpoints_json(curve, h)));
  write_manifest(cfg, man);
  std::set<PieceLabel> labels(curve.labels.begin(), curve.labels.end());
  std::cout << "regime " << to_string(curve.regime) << ", " << curve.size() << " points, " << labels.size()
            << " piece labels, hash " << h << "\n";
  return 0;
}

int cmd_flats(const Common& c, const std::string& mode) {
  Config cfg = load(c, [&](json& run) {
    if (!mode.empty()) run["mode"] = mode;
  });
  RunManifest man = manifest_for(cfg, "flats");
  const std::string h = manifest_hash(man);
  FlatOptions fo;
  fo.effective = cfg.effective();
  fo.events.samples = cfg.run.samples;
  fo.events.seed = cfg.run.seed;
  fo.events.jobs = cfg.run.jobs;
  fo.event_policy = cfg.run.mode == "both"  ? EventPolicy::Always
                    : cfg.run.mode == "gap" ? EventPolicy::Never
                                            : EventPolicy::RandomOnly;
  fo.closed_form_override = cfg.run.closed_form_override;
  FlatPieceReport rep = flat_report(cfg.g, cfg.v, cfg.beta, fo);
  write_file(out_path(cfg, "flats.json"), dump_json(flat_report_json(rep, h)));
  write_manifest(cfg, man);
  std::cout << "heights";
  for (double x : rep.heights) std::cout << " " << fmt17(x);
  std::cout << "\n";
  return 0;
}

std::vector<double> default_probes(const EffectiveModel& model) {
  std::vector<double> p;
  for (const CurveSegment& s : model.segments()) {
    if (std::isinf(s.lo)) p.push_back(s.hi - 0.4);
    else if (std::isinf(s.hi)) p.push_back(s.lo + 0.4);
    else p.push_back(0.5 * (s.lo + s.hi));
  }
  const auto& bp = model.breakpoints();
  if (!bp.empty()) {
    p.push_back(bp.front().theta);
    p.push_back(bp.back().theta);
  }
  std::sort(p.begin(), p.end());
  return p;
}

int cmd_validate(const Common& c, std::optional<double> curve_beta, const std::string& eps_list, double theta) {
  Config cfg = load(c);
  RunManifest man = manifest_for(cfg, "validate");
  if (curve_beta) man.effective["curve_beta"] = *curve_beta;
  if (!eps_list.empty()) man.effective["eps_sweep"] = eps_list;
  const std::string h = manifest_hash(man);
  EffectiveModel model(cfg.g, cfg.v, cfg.beta, cfg.effective());
  EffectiveModel curve_model(cfg.g, cfg.v, curve_beta.value_or(cfg.beta), cfg.effective());
  SolverConfig sc;
  sc.dx = cfg.run.dx;
  sc.T = cfg.run.T;
  sc.R = cfg.run.R;
  if (!cfg.v.periodic() && sc.R == 0.0) sc.R = default_alpha(cfg.g, cfg.beta, 0.0) * sc.T + 8.0;
  OracleOptions oo;
  oo.realizations = cfg.run.oracle_realizations;
  oo.seed = cfg.run.seed;
  oo.jobs = cfg.run.jobs;
  int code = 0;
  if (!eps_list.empty()) {
    std::vector<double> inv;
    std::stringstream ss(eps_list);
    for (std::string tok; std::getline(ss, tok, ',');) {
      try {
        inv.push_back(std::stod(tok));
      } catch (const std::exception&) {
        fail(ErrorKind::Config, "--eps-sweep expects comma-separated numbers");
      }
    }
    sc.theta = theta;
    auto rows = eps_sweep(sc, cfg.g, cfg.beta, cfg.v, inv, curve_model.evaluate(theta).hbar);
    write_file(out_path(cfg, "eps_sweep.csv"), eps_csv(rows, h));
    bool decreasing = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::printf("1/eps=%g  eps*u=%.10f  err=%.3e\n", rows[i].inverse_eps, rows[i].scaled, rows[i].err);
      if (i > 0 && !(rows[i].err < rows[i - 1].err)) decreasing = false;
    }
    std::cout << (decreasing ? "PASS" : "FAIL") << " eps-sweep errors " << (decreasing ? "decrease" : "do not decrease")
              << "\n";
    if (!decreasing) code = exit_code(ErrorKind::InconsistentEvidence);
  } else {
    std::vector<double> probes = cfg.run.probes.empty() ? default_probes(model) : cfg.run.probes;
    auto curve = [&](double t) { return curve_model.evaluate(t).hbar; };
    ValidationTable tab = compare_curve(curve, cfg.g, cfg.beta, cfg.v, probes, cfg.run.tolerance, sc, oo);
    write_file(out_path(cfg, "validation.csv"), validation_csv(tab, h));
    for (const ProbeResult& p : tab.rows)
      std::printf("theta=%9.5f  curve=%.6f  oracle=%.6f  err=%.2e  %s\n", p.theta, p.curve, p.oracle, p.err,
                  p.pass ? "pass" : "FAIL");
    std::printf("%s max_err=%.3e tol=%.1e\n", tab.all_pass ? "PASS" : "FAIL", tab.max_err, cfg.run.tolerance);
    if (!tab.all_pass) code = exit_code(ErrorKind::InconsistentEvidence);
  }
  write_manifest(cfg, man);
  return code;
}

int cmd_corrector(const Common& c, const std::string& recipe, std::optional<double> lambda,
                  std::optional<double> epsilon, std::optional<int> branch) {
  Config cfg = load(c, [&](json& run) {
    if (!recipe.empty()) run["recipe"] = recipe;
    if (lambda) run["lambda"] = *lambda;
    if (epsilon) run["epsilon"] = *epsilon;
    if (branch) run["branch"] = *branch;
  });
  RunManifest man = manifest_for(cfg, "corrector");
  const std::string h = manifest_hash(man);
  auto tag = parse_recipe(cfg.run.recipe);
  if (!tag) fail(ErrorKind::Config, "unknown recipe '" + cfg.run.recipe + "'");
  Recipe r{*tag, cfg.run.lambda, cfg.run.epsilon, cfg.run.branch};
  const double hw = cfg.run.half_width;
  PathRealization path = cfg.v.periodic() ? cfg.v.path_with_offset({-hw, hw}, 0.0)
                                          : cfg.v.sample_path({-hw, hw}, numeric::derive_seed(cfg.run.seed, 0));
  if (cfg.g.reflected()) path = path.reflect();
  PiecewiseCorrector f = concat_corrector(r, cfg.g, cfg.beta, path);
  ViscosityReport rep = verify_viscosity(f);
  write_file(out_path(cfg, "corrector.csv"), corrector_csv(f, cfg.run.points, h));
  json vj = viscosity_json(rep, role(*tag), cfg.run.recipe, h);
  write_file(out_path(cfg, "viscosity.json"), dump_json(vj));
  write_manifest(cfg, man);
  std::cout << cfg.run.recipe << ": sub=" << (vj["sub"].is_null() ? "absent" : fmt17(rep.sub_level))
            << " super=" << (vj["super"].is_null() ? "absent" : fmt17(rep.super_level))
            << " residual=" << rep.max_residual << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Effective Hamiltonians for 1-D double-well Hamilton-Jacobi equations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Common cc, fc, vc, kc;
  auto* curve = app.add_subcommand("curve", "assemble the effective Hamiltonian on a theta grid");
  add_common(curve, cc);

  std::string mode;
  auto* flats = app.add_subcommand("flats", "classify the flat pieces");
  add_common(flats, fc);
  flats->add_option("--mode", mode, "interior criterion: auto, gap or both")
      ->check(CLI::IsMember({"auto", "gap", "both"}));

  std::optional<double> curve_beta;
  std::string eps_list;
  double theta = 0.0;
  auto* validate = app.add_subcommand("validate", "compare the curve with the finite-difference oracle");
  add_common(validate, vc);
  validate->add_option("--curve-beta", curve_beta, "build the compared curve with this beta (negative control)");
  validate->add_option("--eps-sweep", eps_list, "comma-separated 1/eps values, e.g. 20,40,80");
  validate->add_option("--theta", theta, "slope for the eps sweep");

  std::string recipe;
  std::optional<double> lambda, epsilon;
  std::optional<int> branch;
  auto* corr = app.add_subcommand("corrector", "build a corrector recipe and certify its viscosity levels");
  add_common(corr, kc);
  corr->add_option("--recipe", recipe, "recipe name, e.g. LadderLower or Flat_beta_sub");
  corr->add_option("--lambda", lambda, "level for Smooth, Ladder* and Interior_*");
  corr->add_option("--epsilon", epsilon, "slack for concatenations");
  corr->add_option("--branch", branch, "branch for Smooth");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::Config);
  }

  try {
    if (*curve) return cmd_curve(cc);
    if (*flats) return cmd_flats(fc, mode);
    if (*validate) return cmd_validate(vc, curve_beta, eps_list, theta);
    if (*corr) return cmd_corrector(kc, recipe, lambda, epsilon, branch);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
