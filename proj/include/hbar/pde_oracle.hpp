#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hbar/correctors.hpp"
#include "hbar/error.hpp"
#include "hbar/hamiltonian.hpp"
#include "hbar/numeric.hpp"
#include "hbar/potential.hpp"

namespace hbar {

struct SolverConfig {
  double dx = 1e-3;
  double T = 50.0;
  double R = 0.0;       // 0: quasi-periodic one-period mode; otherwise half width of the truncated domain
  double theta = 0.0;
  double alpha = 0.0;   // 0: use the Lipschitz bound of G
  double cfl = 0.5;
  double far_field_hbar = 0.0;  // boundary values theta x - far_field_hbar t in truncated mode
};

struct SolveRecord {
  std::vector<double> t;   // T/4, T/2, 3T/4, T
  std::vector<double> u0;  // u(t, 0)
  double dt = 0.0;
  double dx = 0.0;
  double alpha = 0.0;
  std::size_t steps = 0;
};

// Largest |p| the solution from slope theta can reach: outer sublevel set of G.
inline double slope_bound(const DoubleWellSpec& g, double beta, double theta) {
  const DoubleWellSpec c = g.canonical();
  const double th = g.reflected() ? -theta : theta;
  double level = std::max(c(th), c.m() + c.M()) + 2.0 * beta + 1.0;
  return std::max({std::abs(c.branch_inverse(1, level)), std::abs(c.branch_inverse(4, level)), std::abs(theta)});
}

inline double default_alpha(const DoubleWellSpec& g, double beta, double theta) {
  return g.lipschitz_bound(slope_bound(g, beta, theta));
}

// Monotonicity of the Lax-Friedrichs update: alpha dominates |G'| and alpha dt/dx <= 1.
inline bool scheme_is_monotone(const DoubleWellSpec& g, double beta, double theta, double alpha, double cfl) {
  return cfl > 0.0 && cfl <= 1.0 && alpha >= g.lipschitz_bound(slope_bound(g, beta, theta));
}

inline double lf_flux(const DoubleWellSpec& g, double pm, double pp, double alpha) {
  return g(0.5 * (pm + pp)) - 0.5 * alpha * (pp - pm);
}

// Explicit update on one period for w = u - theta x, with w periodic.
class QuasiPeriodicScheme {
 public:
  QuasiPeriodicScheme(const DoubleWellSpec& g, double beta, std::vector<double> v, double dx, double theta,
                      double alpha, double dt)
      : g_(g), beta_(beta), v_(std::move(v)), dx_(dx), theta_(theta), alpha_(alpha), dt_(dt) {}

  void step(std::vector<double>& w) const {
    const std::size_t n = w.size();
    next_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      double wl = w[j == 0 ? n - 1 : j - 1], wr = w[j + 1 == n ? 0 : j + 1];
      double pm = theta_ + (w[j] - wl) / dx_, pp = theta_ + (wr - w[j]) / dx_;
      next_[j] = w[j] - dt_ * (lf_flux(g_, pm, pp, alpha_) + beta_ * v_[j]);
    }
    w.swap(next_);
  }

  std::size_t size() const { return v_.size(); }

 private:
  DoubleWellSpec g_;
  double beta_;
  std::vector<double> v_;
  double dx_, theta_, alpha_, dt_;
  mutable std::vector<double> next_;
};

namespace detail {

inline void check_config(const SolverConfig& c) {
  if (!(c.cfl > 0.0 && c.cfl <= 0.5)) fail(ErrorKind::CflViolation, "cfl must lie in (0, 0.5]");
  if (!(c.dx > 0.0) || !(c.T > 0.0)) fail(ErrorKind::Config, "dx and T must be positive");
}

inline double resolve_alpha(const SolverConfig& c, const DoubleWellSpec& g, double beta) {
  double need = default_alpha(g, beta, c.theta);
  if (c.alpha == 0.0) return need;
  if (c.alpha < need) fail(ErrorKind::CflViolation, "alpha below the Lipschitz bound of G");
  return c.alpha;
}

// Step count divisible by four so the checkpoints land on steps.
inline std::size_t step_count(double T, double dt_max) {
  auto n = static_cast<std::size_t>(std::ceil(T / dt_max));
  return (n + 3) / 4 * 4;
}

}  // namespace detail

inline SolveRecord solve_hj(const SolverConfig& cfg, const DoubleWellSpec& g, double beta,
                            const PathRealization& path) {
  detail::check_config(cfg);
  SolveRecord rec;
  rec.alpha = detail::resolve_alpha(cfg, g, beta);
  const bool periodic_mode = cfg.R == 0.0;
  if (periodic_mode) {
    if (!path.periodic()) fail(ErrorKind::DomainTooSmall, "one-period mode needs a periodic potential");
    const double P = path.period();
    auto n = static_cast<std::size_t>(std::llround(P / cfg.dx));
    if (n < 4) fail(ErrorKind::DomainTooSmall, "fewer than four cells per period");
    rec.dx = P / static_cast<double>(n);
    std::vector<double> v(n);
    for (std::size_t j = 0; j < n; ++j) v[j] = path.value_unchecked(static_cast<double>(j) * rec.dx);
    rec.steps = detail::step_count(cfg.T, cfg.cfl * rec.dx / rec.alpha);
    rec.dt = cfg.T / static_cast<double>(rec.steps);
    QuasiPeriodicScheme s(g, beta, std::move(v), rec.dx, cfg.theta, rec.alpha, rec.dt);
    std::vector<double> w(n, 0.0);
    for (std::size_t k = 1; k <= rec.steps; ++k) {
      s.step(w);
      if (k % (rec.steps / 4) == 0) {
        rec.t.push_back(static_cast<double>(k) * rec.dt);
        rec.u0.push_back(w[0]);
      }
    }
    return rec;
  }

  // Truncated domain [-R, R] with linear far-field values.
  if (cfg.R < rec.alpha * cfg.T + 4.0)
    fail(ErrorKind::DomainTooSmall, "R must exceed alpha T so the boundary cannot reach x=0");
  if (path.window().lo > -cfg.R || path.window().hi < cfg.R)
    fail(ErrorKind::DomainTooSmall, "the realized path does not cover [-R, R]");
  auto half = static_cast<std::size_t>(std::llround(cfg.R / cfg.dx));
  rec.dx = cfg.R / static_cast<double>(half);
  const std::size_t n = 2 * half + 1;
  std::vector<double> x(n), v(n), u(n), nx(n);
  for (std::size_t j = 0; j < n; ++j) {
    x[j] = (static_cast<double>(j) - static_cast<double>(half)) * rec.dx;
    v[j] = path.value_unchecked(x[j]);
    u[j] = cfg.theta * x[j];
  }
  rec.steps = detail::step_count(cfg.T, cfg.cfl * rec.dx / rec.alpha);
  rec.dt = cfg.T / static_cast<double>(rec.steps);
  for (std::size_t k = 1; k <= rec.steps; ++k) {
    const double t = static_cast<double>(k) * rec.dt;
    for (std::size_t j = 1; j + 1 < n; ++j) {
      double pm = (u[j] - u[j - 1]) / rec.dx, pp = (u[j + 1] - u[j]) / rec.dx;
      nx[j] = u[j] - rec.dt * (lf_flux(g, pm, pp, rec.alpha) + beta * v[j]);
    }
    nx[0] = cfg.theta * x[0] - cfg.far_field_hbar * t;
    nx[n - 1] = cfg.theta * x[n - 1] - cfg.far_field_hbar * t;
    u.swap(nx);
    if (k % (rec.steps / 4) == 0) {
      rec.t.push_back(t);
      rec.u0.push_back(u[half]);
    }
  }
  return rec;
}

// Richardson in T: with u(t,0) = -H t + c + o(1), the slope between T/2 and T removes c.
inline double hbar_from_record(const SolveRecord& r) { return -(r.u0[3] - r.u0[1]) / (r.t[3] - r.t[1]); }
inline double hbar_early(const SolveRecord& r) { return -(r.u0[1] - r.u0[0]) / (r.t[1] - r.t[0]); }

struct OracleOptions {
  std::size_t realizations = 8;  // random processes
  std::uint64_t seed = 1;
  bool two_grid = true;
  unsigned jobs = 1;
};

struct OracleEstimate {
  double value = 0.0;
  double error_bar = 0.0;
  double fine = 0.0;
  double coarse = 0.0;
  double time_residual = 0.0;
  double std_err = 0.0;
  std::size_t realizations = 1;
};

inline OracleEstimate estimate_hbar(const SolverConfig& cfg, const DoubleWellSpec& g, double beta,
                                    const PotentialProcess& v, const OracleOptions& opt = {}) {
  OracleEstimate out;
  auto run = [&](const PathRealization& path, double dx, double& early) {
    SolverConfig c = cfg;
    c.dx = dx;
    SolveRecord r = solve_hj(c, g, beta, path);
    early = hbar_early(r);
    return hbar_from_record(r);
  };
  if (v.periodic() && cfg.R == 0.0) {
    PathRealization path = v.path_with_offset({-v.period(), 2.0 * v.period()}, 0.0);
    double e1 = 0.0, e2 = 0.0;
    out.fine = run(path, cfg.dx, e1);
    out.time_residual = std::abs(out.fine - e1);
    out.coarse = opt.two_grid ? run(path, 2.0 * cfg.dx, e2) : out.fine;
    out.value = out.fine;
    out.error_bar = out.time_residual + std::abs(out.fine - out.coarse);
    return out;
  }
  if (cfg.R == 0.0) fail(ErrorKind::DomainTooSmall, "random potentials need the truncated-domain mode (R > 0)");
  const std::size_t n = std::max<std::size_t>(opt.realizations, 2);
  std::vector<double> fine(n), coarse(n), resid(n);
  numeric::parallel_for(n, opt.jobs, [&](std::size_t r) {
    PathRealization path = v.sample_path({-cfg.R - 1.0, cfg.R + 1.0}, numeric::derive_seed(opt.seed, r));
    double e = 0.0, e2 = 0.0;
    fine[r] = run(path, cfg.dx, e);
    resid[r] = std::abs(fine[r] - e);
    coarse[r] = opt.two_grid ? run(path, 2.0 * cfg.dx, e2) : fine[r];
  });
  Estimate f = numeric::mean_stderr(fine), c = numeric::mean_stderr(coarse), t = numeric::mean_stderr(resid);
  out.fine = f.value;
  out.coarse = c.value;
  out.value = f.value;
  out.std_err = f.std_err;
  out.time_residual = t.value;
  out.realizations = n;
  out.error_bar = out.time_residual + std::abs(out.fine - out.coarse) + 2.0 * out.std_err;
  return out;
}

struct ProbeResult {
  double theta = 0.0;
  double curve = 0.0;
  double oracle = 0.0;
  double error_bar = 0.0;
  double err = 0.0;
  bool pass = false;
};

struct ValidationTable {
  std::vector<ProbeResult> rows;
  double max_err = 0.0;
  bool all_pass = true;
};

// `curve` maps theta to the assembled value.
template <class Curve>
ValidationTable compare_curve(Curve&& curve, const DoubleWellSpec& g, double beta, const PotentialProcess& v,
                              const std::vector<double>& probes, double tol, SolverConfig cfg = {},
                              const OracleOptions& opt = {}) {
  ValidationTable tab;
  tab.rows.resize(probes.size());
  for (std::size_t k = 0; k < probes.size(); ++k) {
    ProbeResult& p = tab.rows[k];
    p.theta = probes[k];
    p.curve = curve(p.theta);
    SolverConfig c = cfg;
    c.theta = p.theta;
    if (c.R > 0.0) c.far_field_hbar = p.curve;
    OracleEstimate e = estimate_hbar(c, g, beta, v, opt);
    p.oracle = e.value;
    p.error_bar = e.error_bar;
    p.err = std::abs(p.curve - p.oracle);
    p.pass = p.err <= tol;
    tab.max_err = std::max(tab.max_err, p.err);
    tab.all_pass = tab.all_pass && p.pass;
  }
  return tab;
}

// eps u(1/eps, 0) for each 1/eps in `inverse_eps`, from one run per value, on the shift V(. + offset).
// At the crest of a symmetric profile u(t,0) = -H t exactly, so offset 0 only shows the discretization bias.
struct EpsRow {
  double inverse_eps = 0.0;
  double scaled = 0.0;  // eps u(1/eps, 0)
  double err = 0.0;     // |scaled + hbar_ref|
};

inline std::vector<EpsRow> eps_sweep(SolverConfig cfg, const DoubleWellSpec& g, double beta,
                                     const PotentialProcess& v, const std::vector<double>& inverse_eps,
                                     double hbar_ref, double offset = 0.5) {
  if (!v.periodic()) fail(ErrorKind::Config, "the eps sweep runs in one-period mode");
  PathRealization path = v.path_with_offset({-v.period(), 2.0 * v.period()}, offset);
  std::vector<EpsRow> rows;
  for (double n : inverse_eps) {
    cfg.T = n;
    SolveRecord r = solve_hj(cfg, g, beta, path);
    EpsRow row{n, r.u0.back() / n, 0.0};
    row.err = std::abs(row.scaled + hbar_ref);
    rows.push_back(row);
  }
  return rows;
}

// Max over one period of the scheme's truncation error on u = -lambda t + f_4(x).
inline double consistency_residual(const DoubleWellSpec& g, double beta, const PathRealization& path, double lambda,
                                   double dx, double alpha) {
  if (!path.periodic()) fail(ErrorKind::Config, "consistency check runs on a periodic path");
  const double P = path.period();
  PathRealization w = path.with_window({-P, 2.0 * P});
  PiecewiseCorrector f = smooth_corrector(4, lambda, w, g.canonical(), beta);
  auto n = static_cast<std::size_t>(std::llround(P / dx));
  double h = P / static_cast<double>(n), worst = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double x = static_cast<double>(j) * h;
    double fl = f.value(x - h), f0 = f.value(x), fr = f.value(x + h);
    double tau = -lambda + lf_flux(g.canonical(), (f0 - fl) / h, (fr - f0) / h, alpha) + beta * w.value_unchecked(x);
    worst = std::max(worst, std::abs(tau));
  }
  return worst;
}

// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double a = std::log(x[i]), b = std::log(y[i]);
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace hbar
