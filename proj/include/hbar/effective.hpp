#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hbar/correctors.hpp"
#include "hbar/crossings.hpp"
#include "hbar/error.hpp"
#include "hbar/hamiltonian.hpp"
#include "hbar/numeric.hpp"
#include "hbar/potential.hpp"

namespace hbar {

enum class PieceLabel { Dec1, FlatMB, Inc2, FlatM, Dec3, FlatBeta, Inc4, NonincLambda, FlatInterior };

inline const char* to_string(PieceLabel l) {
  switch (l) {
    case PieceLabel::Dec1: return "Dec1";
    case PieceLabel::FlatMB: return "FlatMB";
    case PieceLabel::Inc2: return "Inc2";
    case PieceLabel::FlatM: return "FlatM";
    case PieceLabel::Dec3: return "Dec3";
    case PieceLabel::FlatBeta: return "FlatBeta";
    case PieceLabel::Inc4: return "Inc4";
    case PieceLabel::NonincLambda: return "NonincLambda";
    case PieceLabel::FlatInterior: return "FlatInterior";
  }
  return "?";
}

inline bool is_flat(PieceLabel l) {
  return l == PieceLabel::FlatMB || l == PieceLabel::FlatM || l == PieceLabel::FlatBeta || l == PieceLabel::FlatInterior;
}

struct EffectiveOptions {
  std::size_t realizations = 16;  // random processes only
  double window = 2.0e4;          // averaging length per realization
  std::uint64_t seed = 1;
  unsigned jobs = 1;
  bool reflect = false;           // use V(-x) instead of V(x)
  double delta0_frac = 0.05;      // first one-sided offset, as a fraction of m+beta-max{beta,M}
  int max_halvings = 24;
  int lambda_nodes = 48;          // random processes: interior table for the generalized inverse
  Tolerances tol;
};

struct Theta13Pair {
  Estimate lower;
  Estimate upper;
  Estimate gap;  // upper - lower, paired per realization
};

struct OneSidedLimit {
  Estimate value;
  double kind_gap = 0.0;  // |upper - lower| after extrapolation
  int halvings = 0;
  double last_delta = 0.0;
  bool window_limited = false;
};

struct Theta13Limits {
  OneSidedLimit bottom;  // at max{beta,M}+
  OneSidedLimit top;     // at (m+beta)-
};

// One piece of the piecewise description on [lo, hi] in theta.
struct CurveSegment {
  PieceLabel label = PieceLabel::Dec1;
  double lo = -kInf;
  double hi = kInf;
  double height = std::numeric_limits<double>::quiet_NaN();  // flats only
};

struct CurveBreakpoint {
  std::string name;
  double theta = 0.0;
  double std_err = 0.0;
};

struct CurveValue {
  double hbar = 0.0;
  double std_err = 0.0;
  PieceLabel label = PieceLabel::Dec1;
  double height = std::numeric_limits<double>::quiet_NaN();
};

class EffectiveModel {
 public:
  EffectiveModel(const DoubleWellSpec& g, PotentialProcess v, double beta, EffectiveOptions opt = {})
      : g_(g.canonical()), v_(std::move(v)), beta_(beta), opt_(opt), cache_(std::make_shared<Cache>()) {
    regime_ = classify_regime(g_, beta_, opt_.tol.eq);
    if (g.reflected()) opt_.reflect = !opt_.reflect;
    deterministic_ = v_.periodic();
    if (deterministic_) {
      A_ = 0.0;
      B_ = v_.period();
      margin_ = 2.0 * v_.period();
      PathRealization p = v_.path_with_offset({A_ - margin_, B_ + margin_}, 0.0);
      paths_.push_back(opt_.reflect ? p.reflect() : p);
    } else {
      if (opt_.realizations < 2) fail(ErrorKind::Config, "random processes need at least two realizations");
      A_ = -opt_.window / 2.0;
      B_ = opt_.window / 2.0;
      margin_ = std::max(64.0, 0.05 * opt_.window);
      for (std::size_t r = 0; r < opt_.realizations; ++r) {
        PathRealization p = v_.sample_path({A_ - margin_, B_ + margin_}, numeric::derive_seed(opt_.seed, r));
        paths_.push_back(opt_.reflect ? p.reflect() : p);
      }
    }
    for (const PathRealization& p : paths_) {
      PathRealization q = p.with_window({A_, B_});
      if (q.piecewise_linear()) {
        segments_.push_back(q.knots_in_window());
        mean_v_.push_back(spatial_average(q, [](double x) { return x; }));
      } else {
        segments_.emplace_back();
        mean_v_.push_back(spatial_average(q, [](double x) { return x; }));
      }
    }
  }

  const DoubleWellSpec& hamiltonian() const { return g_; }
  const PotentialProcess& process() const { return v_; }
  double beta() const { return beta_; }
  double m() const { return g_.m(); }
  double M() const { return g_.M(); }
  double bottom() const { return std::max(beta_, g_.M()); }
  double top() const { return g_.m() + beta_; }
  Regime regime() const { return regime_; }
  bool deterministic() const { return deterministic_; }
  bool reflected() const { return opt_.reflect; }
  const EffectiveOptions& options() const { return opt_; }
  std::size_t realizations() const { return paths_.size(); }
  const PathRealization& path(std::size_t r) const { return paths_.at(r); }
  // True when the generalized-inverse stretch exists.
  bool has_ladder_stretch() const { return bottom() < top() - opt_.tol.eq; }

  double gap_tol(const Estimate& gap) const { return std::max(opt_.tol.gap_floor, 5.0 * gap.std_err); }

  // theta_i(lambda) = E[G_i^{-1}(lambda - beta V)].
  Estimate theta_branch(int i, double lambda) const {
    if (!admissible_smooth(g_, beta_, i, lambda, opt_.tol.eq))
      fail(ErrorKind::Regime, "lambda outside the admissible interval of branch " + std::to_string(i));
    return over_realizations([&](std::size_t r) { return branch_average(r, i, lambda); });
  }

  // Inverse of the monotone map theta_i by bisection in lambda.
  Estimate theta_branch_inverse(int i, double theta) const {
    auto [lo, hi] = branch_lambda_range(i);
    const bool inc = (i == 2 || i == 4);
    auto f = [&](double lam) { return theta_branch(i, lam).value; };
    if (std::isinf(hi)) {
      double span = 1.0;
      hi = lo + span;
      while (inc ? f(hi) < theta : f(hi) > theta) {
        span *= 2.0;
        hi = lo + span;
        if (span > 1e12) fail(ErrorKind::NonConvergence, "theta outside the range of the branch map");
      }
    }
    double flo = f(lo), fhi = f(hi);
    double tlo = std::min(flo, fhi), thi = std::max(flo, fhi);
    if (theta < tlo - opt_.tol.curve || theta > thi + opt_.tol.curve)
      fail(ErrorKind::OutOfInterval, "theta outside the range of theta_" + std::to_string(i));
    double lam = numeric::solve_monotone(f, theta, lo, hi, inc, opt_.tol.lambda * 1e-3);
    Estimate e{lam, 0.0};
    if (!deterministic_) {
      double h = 1e-6 * std::max(1.0, std::abs(lam));
      double a = std::max(lo, lam - h), b = std::min(std::isinf(hi) ? lam + h : hi, lam + h);
      double slope = (f(b) - f(a)) / (b - a);
      e.std_err = slope != 0.0 ? theta_branch(i, lam).std_err / std::abs(slope) : 0.0;
    }
    return e;
  }

  // Slope average of the lower (or upper) ladder corrector at level lambda.
  Estimate theta13(double lambda, LadderKind kind) const {
    Theta13Pair p = theta13_pair(lambda);
    return kind == LadderKind::Lower ? p.lower : p.upper;
  }

  Theta13Pair theta13_pair(double lambda) const {
    check_ladder_lambda(levels_for(g_, beta_, lambda));
    std::vector<double> lo(paths_.size()), up(paths_.size());
    numeric::parallel_for(paths_.size(), opt_.jobs, [&](std::size_t r) {
      auto [a, b] = ladder_averages(r, lambda);
      lo[r] = a;
      up[r] = b;
    });
    return pair_from(lo, up);
  }

  const Theta13Limits& theta13_limits() const {
    std::call_once(cache_->limits_once, [&] { cache_->limits = compute_limits(); });
    return *cache_->limits;
  }

  // Heights where interior flats can sit for piecewise-linear laws: M + beta a and m + beta a over atoms/knot values.
  std::vector<double> candidate_heights() const {
    std::vector<double> vals;
    switch (v_.kind()) {
      case ProcessKind::PeriodicSingleWell:
      case ProcessKind::PeriodicMultiWell:
        vals = v_.knot_v();
        break;
      case ProcessKind::IidPiecewiseLinear:
        vals = v_.mu1().atom_values();
        break;
      case ProcessKind::MarkovInterlaced:
        vals = v_.mu1().atom_values();
        for (double a : v_.mu2().atom_values()) vals.push_back(a);
        break;
      case ProcessKind::UserCallable:
        break;
    }
    std::vector<double> out;
    if (!has_ladder_stretch()) return out;
    for (double a : vals)
      for (double lam : {M() + beta_ * a, m() + beta_ * a})
        if (lam > bottom() + opt_.tol.eq && lam < top() - opt_.tol.eq) out.push_back(lam);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
              out.end());
    return out;
  }

  struct InteriorFlat {
    double lambda = 0.0;
    Theta13Pair pair;
  };

  // Heights inside (max{beta,M}, m+beta) whose [lower, upper] interval has positive length.
  const std::vector<InteriorFlat>& interior_flats() const {
    std::call_once(cache_->flats_once, [&] {
      std::vector<InteriorFlat> out;
      if (has_ladder_stretch()) {
        if (deterministic_) {
          for (double c : candidate_heights()) {
            Theta13Pair p = theta13_pair(c);
            if (p.gap.value > gap_tol(p.gap)) out.push_back({c, p});
          }
        } else {
          for (const Node& n : table())
            if (n.interior && n.pair.gap.value > gap_tol(n.pair.gap)) out.push_back({n.lambda, n.pair});
        }
      }
      cache_->flats = std::move(out);
    });
    return *cache_->flats;
  }

  // Lambda(theta) = inf{lambda : lower theta13(lambda) <= theta}; `flat` is set when theta sits in a gap.
  Estimate lambda_of_theta(double theta, double* flat = nullptr) const {
    if (!has_ladder_stretch()) fail(ErrorKind::Regime, "the generalized inverse needs max{beta,M} < m+beta");
    const Theta13Limits& L = theta13_limits();
    if (!(theta > L.top.value.value && theta < L.bottom.value.value))
      fail(ErrorKind::OutOfInterval, "theta outside (theta13(m+beta), theta13(max{beta,M}))");
    if (flat) *flat = std::numeric_limits<double>::quiet_NaN();
    for (const InteriorFlat& f : interior_flats()) {
      if (theta >= f.pair.lower.value && theta <= f.pair.upper.value) {
        if (flat) *flat = f.lambda;
        return {f.lambda, 0.0};
      }
    }
    if (deterministic_) {
      // Only midpoints are evaluated, so the excluded endpoints are never touched.
      double lo = bottom(), hi = top();
      for (int it = 0; it < 200 && hi - lo > opt_.tol.lambda * 1e-2; ++it) {
        double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (theta13_pair(mid).lower.value <= theta)
          hi = mid;
        else
          lo = mid;
      }
      return {hi, 0.0};
    }
    const auto& T = table();
    std::size_t k = 1;
    while (k < T.size() && T[k].pair.lower.value > theta) ++k;
    if (k >= T.size()) k = T.size() - 1;
    const Node& b = T[k];
    if (theta <= b.pair.upper.value) {
      if (flat && b.interior && b.pair.gap.value > gap_tol(b.pair.gap)) *flat = b.lambda;
      return {b.lambda, 0.0};
    }
    const Node& a = T[k - 1];
    double t0 = a.pair.lower.value, t1 = b.pair.upper.value;
    double w = (t0 - theta) / (t0 - t1);
    double lam = a.lambda + (b.lambda - a.lambda) * w;
    double dl_dt = (b.lambda - a.lambda) / std::max(1e-300, t0 - t1);
    double se = dl_dt * 0.5 * (a.pair.lower.std_err + b.pair.upper.std_err);
    return {lam, se};
  }

  // Piecewise description, sorted by theta.
  const std::vector<CurveSegment>& segments() const {
    std::call_once(cache_->seg_once, [&] { cache_->segments = compute_segments(); });
    return *cache_->segments;
  }

  const std::vector<CurveBreakpoint>& breakpoints() const {
    segments();
    return *cache_->breakpoints;
  }

  CurveValue evaluate(double theta) const {
    const auto& segs = segments();
    const CurveSegment* s = &segs.back();
    for (const CurveSegment& c : segs) {
      if (theta <= c.hi) {
        s = &c;
        break;
      }
    }
    CurveValue out;
    out.label = s->label;
    out.height = s->height;
    switch (s->label) {
      case PieceLabel::FlatMB:
      case PieceLabel::FlatM:
      case PieceLabel::FlatBeta:
      case PieceLabel::FlatInterior:
        out.hbar = s->height;
        return out;
      case PieceLabel::Dec1:
      case PieceLabel::Inc2:
      case PieceLabel::Dec3:
      case PieceLabel::Inc4: {
        int i = s->label == PieceLabel::Dec1 ? 1 : s->label == PieceLabel::Inc2 ? 2 : s->label == PieceLabel::Dec3 ? 3 : 4;
        Estimate e = theta_branch_inverse(i, theta);
        out.hbar = e.value;
        out.std_err = e.std_err;
        return out;
      }
      case PieceLabel::NonincLambda: {
        double flat = std::numeric_limits<double>::quiet_NaN();
        const Theta13Limits& L = theta13_limits();
        if (theta >= L.bottom.value.value) {
          out.hbar = bottom();
          return out;
        }
        if (theta <= L.top.value.value) {
          out.hbar = top();
          return out;
        }
        Estimate e = lambda_of_theta(theta, &flat);
        out.hbar = e.value;
        out.std_err = e.std_err;
        if (!std::isnan(flat)) {
          out.label = PieceLabel::FlatInterior;
          out.height = flat;
        }
        return out;
      }
    }
    return out;
  }

 private:
  struct Node {
    double lambda = 0.0;
    Theta13Pair pair;
    bool interior = true;
  };

  struct Cache {
    std::once_flag limits_once, table_once, flats_once, seg_once;
    std::optional<Theta13Limits> limits;
    std::optional<std::vector<Node>> table;
    std::optional<std::vector<InteriorFlat>> flats;
    std::optional<std::vector<CurveSegment>> segments;
    std::optional<std::vector<CurveBreakpoint>> breakpoints;
  };

  template <class F>
  Estimate over_realizations(F&& f) const {
    std::vector<double> vals(paths_.size());
    numeric::parallel_for(paths_.size(), opt_.jobs, [&](std::size_t r) { vals[r] = f(r); });
    Estimate e = numeric::mean_stderr(vals);
    if (deterministic_) e.std_err = 0.0;
    return e;
  }

  Theta13Pair pair_from(const std::vector<double>& lo, const std::vector<double>& up) const {
    std::vector<double> d(lo.size());
    for (std::size_t r = 0; r < lo.size(); ++r) d[r] = up[r] - lo[r];
    Theta13Pair p{numeric::mean_stderr(lo), numeric::mean_stderr(up), numeric::mean_stderr(d)};
    if (deterministic_) p.lower.std_err = p.upper.std_err = p.gap.std_err = 0.0;
    return p;
  }

  std::pair<double, double> branch_lambda_range(int i) const {
    switch (i) {
      case 1: return {top(), kInf};
      case 2: return {top(), M()};
      case 3: return {beta_, M()};
      case 4: return {beta_, kInf};
    }
    fail(ErrorKind::Config, "branch index must be 1..4");
  }

  double branch_average(std::size_t r, int i, double lambda) const {
    const Branch& br = g_.branch(i);
    if (br.affine_inverse) return g_.branch_inverse(i, lambda - beta_ * mean_v_[r], opt_.tol.eq);
    auto inv = [&](double v) { return g_.branch_inverse(i, lambda - beta_ * v, opt_.tol.eq); };
    const PathRealization& p = paths_[r];
    if (!p.piecewise_linear()) return spatial_average(p.with_window({A_, B_}), inv, opt_.tol.quad);
    const auto& s = segments_[r];
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < s.size(); ++k) {
      double len = s[k + 1].first - s[k].first;
      double v0 = s[k].second, v1 = s[k + 1].second;
      if (v0 == v1)
        total += len * inv(v0);
      else
        total += len * numeric::integrate([&](double t) { return inv(v0 + (v1 - v0) * t); }, 0.0, 1.0, opt_.tol.quad);
    }
    return total / (B_ - A_);
  }

  // Lower and upper ladder corrector averages over [A, B]; widens the margin when the ladder does not cover it.
  std::pair<double, double> ladder_averages(std::size_t r, double lambda) const {
    Levels lv = levels_for(g_, beta_, lambda);
    lv.tol = opt_.tol.level;
    double mg = margin_;
    for (int attempt = 0; attempt < 5; ++attempt, mg *= 4.0) {
      PathRealization p = paths_[r].with_window({A_ - mg, B_ + mg});
      std::optional<CrossingLadder> L;
      try {
        L = build_ladder(p, lv);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::WindowTooShort) throw;
        continue;
      }
      auto lo = clipped(ladder_pieces(L->lower, lambda));
      auto up = clipped(ladder_pieces(L->upper, lambda));
      if (lo.empty() || up.empty()) continue;
      PiecewiseCorrector fl(g_, beta_, p, std::move(lo));
      PiecewiseCorrector fu(g_, beta_, p, std::move(up));
      return {fl.integral(A_, B_) / (B_ - A_), fu.integral(A_, B_) / (B_ - A_)};
    }
    fail(ErrorKind::WindowTooShort, "ladder does not cover the averaging interval at lambda=" + std::to_string(lambda));
  }

  std::vector<Piece> clipped(const std::vector<Piece>& pieces) const {
    std::vector<Piece> out;
    if (pieces.empty() || pieces.front().a > A_ || pieces.back().b < B_) return out;
    for (const Piece& p : pieces)
      if (p.b > A_ && p.a < B_) out.push_back({std::max(p.a, A_), std::min(p.b, B_), p.branch, p.lambda});
    return out;
  }

  Theta13Limits compute_limits() const {
    if (!has_ladder_stretch()) fail(ErrorKind::Regime, "one-sided limits need max{beta,M} < m+beta");
    Theta13Limits L;
    L.bottom = one_sided(+1.0);
    L.top = one_sided(-1.0);
    return L;
  }

  // Halves delta until Richardson-extrapolated values settle.
  OneSidedLimit one_sided(double dir) const {
    const double base = dir > 0 ? bottom() : top();
    const double d0 = opt_.delta0_frac * (top() - bottom());
    const std::size_t R = paths_.size();
    std::vector<double> prev_lo, prev_up, prev_rich_lo;
    std::optional<Estimate> prev_est;
    std::vector<double> history;
    OneSidedLimit out;
    for (int k = 0; k <= opt_.max_halvings; ++k) {
      double delta = d0 * std::ldexp(1.0, -k);
      std::vector<double> lo(R), up(R);
      try {
        numeric::parallel_for(R, opt_.jobs, [&](std::size_t r) {
          auto [a, b] = ladder_averages(r, base + dir * delta);
          lo[r] = a;
          up[r] = b;
        });
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::WindowTooShort || !prev_est) throw;
        out.window_limited = true;
        break;
      }
      if (k > 0) {
        std::vector<double> rich_lo(R), rich_up(R);
        for (std::size_t r = 0; r < R; ++r) {
          rich_lo[r] = 2.0 * lo[r] - prev_lo[r];
          rich_up[r] = 2.0 * up[r] - prev_up[r];
        }
        Estimate e = numeric::mean_stderr(rich_lo);
        if (deterministic_) e.std_err = 0.0;
        Estimate eu = numeric::mean_stderr(rich_up);
        history.push_back(e.value);
        out.kind_gap = std::abs(eu.value - e.value);
        out.halvings = k;
        out.last_delta = delta;
        if (prev_est) {
          double tol = std::max(opt_.tol.limit, e.std_err);
          if (std::abs(e.value - prev_est->value) < tol) {
            out.value = e;
            return out;
          }
        }
        prev_est = e;
        prev_rich_lo = rich_lo;
      }
      prev_lo = lo;
      prev_up = up;
    }
    if (out.window_limited && history.size() >= 2) {
      double d = std::abs(history[history.size() - 1] - history[history.size() - 2]);
      if (d < 3.0 * prev_est->std_err + opt_.tol.limit) {
        out.value = *prev_est;
        return out;
      }
    }
    std::ostringstream os;
    os.precision(12);
    os << "one-sided limit of theta13 at " << base << " did not settle; last values:";
    for (std::size_t i = history.size() >= 3 ? history.size() - 3 : 0; i < history.size(); ++i) os << " " << history[i];
    fail(ErrorKind::NonConvergence, os.str());
  }

  const std::vector<Node>& table() const {
    std::call_once(cache_->table_once, [&] {
      std::vector<Node> T;
      const Theta13Limits& L = theta13_limits();
      Node b;
      b.lambda = bottom();
      b.pair.lower = b.pair.upper = L.bottom.value;
      b.interior = false;
      T.push_back(b);
      std::vector<double> lams;
      int K = std::max(2, opt_.lambda_nodes);
      for (int k = 1; k <= K; ++k) lams.push_back(bottom() + (top() - bottom()) * k / (K + 1.0));
      for (double c : candidate_heights()) lams.push_back(c);
      std::sort(lams.begin(), lams.end());
      lams.erase(std::unique(lams.begin(), lams.end(), [](double x, double y) { return std::abs(x - y) < 1e-12; }),
                 lams.end());
      for (double lam : lams) {
        Node n;
        n.lambda = lam;
        n.pair = theta13_pair(lam);
        T.push_back(n);
      }
      Node t;
      t.lambda = top();
      t.pair.lower = t.pair.upper = L.top.value;
      t.interior = false;
      T.push_back(t);
      cache_->table = std::move(T);
    });
    return *cache_->table;
  }

  std::vector<CurveSegment> compute_segments() const {
    std::vector<CurveBreakpoint> bp;
    auto th = [&](int i, double lam, const char* name) {
      Estimate e = theta_branch(i, lam);
      bp.push_back({name, e.value, e.std_err});
      return e.value;
    };
    const double b = beta_, Mv = M(), tp = top();
    std::vector<CurveSegment> s;
    auto add = [&](PieceLabel l, double lo, double hi, double h = std::numeric_limits<double>::quiet_NaN()) {
      if (hi > lo || std::isinf(lo) || std::isinf(hi)) s.push_back({l, lo, hi, h});
    };
    switch (regime_) {
      case Regime::WeakI: {
        double t1 = th(1, tp, "theta1(m+beta)"), t2a = th(2, tp, "theta2(m+beta)"), t2b = th(2, Mv, "theta2(M)");
        double t3a = th(3, Mv, "theta3(M)"), t3b = th(3, b, "theta3(beta)"), t4 = th(4, b, "theta4(beta)");
        add(PieceLabel::Dec1, -kInf, t1);
        add(PieceLabel::FlatMB, t1, t2a, tp);
        add(PieceLabel::Inc2, t2a, t2b);
        add(PieceLabel::FlatM, t2b, t3a, Mv);
        add(PieceLabel::Dec3, t3a, t3b);
        add(PieceLabel::FlatBeta, t3b, t4, b);
        add(PieceLabel::Inc4, t4, kInf);
        break;
      }
      case Regime::MediumEasyII: {
        double t1 = th(1, Mv, "theta1(m+beta)"), t3a = th(3, Mv, "theta3(M)"), t3b = th(3, b, "theta3(beta)");
        double t4 = th(4, b, "theta4(beta)");
        add(PieceLabel::Dec1, -kInf, t1);
        add(PieceLabel::FlatM, t1, t3a, Mv);
        add(PieceLabel::Dec3, t3a, t3b);
        add(PieceLabel::FlatBeta, t3b, t4, b);
        add(PieceLabel::Inc4, t4, kInf);
        break;
      }
      case Regime::StrongEasyIII: {
        double t1 = th(1, b, "theta1(m+beta)"), t4 = th(4, b, "theta4(beta)");
        add(PieceLabel::Dec1, -kInf, t1);
        add(PieceLabel::FlatBeta, t1, t4, b);
        add(PieceLabel::Inc4, t4, kInf);
        break;
      }
      case Regime::MediumII:
      case Regime::StrongIII: {
        const bool medium = regime_ == Regime::MediumII;
        double t1 = th(1, tp, "theta1(m+beta)");
        const Theta13Limits& L = theta13_limits();
        double ltop = L.top.value.value, lbot = L.bottom.value.value;
        bp.push_back({"theta13(m+beta)", ltop, L.top.value.std_err});
        bp.push_back({"theta13(max{beta,M})", lbot, L.bottom.value.std_err});
        Estimate top_gap{ltop - t1, L.top.value.std_err};
        double stretch_lo = t1;
        add(PieceLabel::Dec1, -kInf, t1);
        if (top_gap.value > gap_tol(top_gap)) {
          add(PieceLabel::FlatMB, t1, ltop, tp);
          stretch_lo = ltop;
        }
        double cur = stretch_lo;
        for (const InteriorFlat& f : interior_flats()) {
          add(PieceLabel::NonincLambda, cur, f.pair.lower.value);
          add(PieceLabel::FlatInterior, f.pair.lower.value, f.pair.upper.value, f.lambda);
          cur = f.pair.upper.value;
        }
        if (medium) {
          double t3a = th(3, Mv, "theta3(M)"), t3b = th(3, b, "theta3(beta)"), t4 = th(4, b, "theta4(beta)");
          Estimate m_gap{t3a - lbot, L.bottom.value.std_err};
          double stretch_hi = m_gap.value > gap_tol(m_gap) ? lbot : t3a;
          add(PieceLabel::NonincLambda, cur, stretch_hi);
          add(PieceLabel::FlatM, stretch_hi, t3a, Mv);
          add(PieceLabel::Dec3, t3a, t3b);
          add(PieceLabel::FlatBeta, t3b, t4, b);
          add(PieceLabel::Inc4, t4, kInf);
        } else {
          double t4 = th(4, b, "theta4(beta)");
          add(PieceLabel::NonincLambda, cur, lbot);
          add(PieceLabel::FlatBeta, lbot, t4, b);
          add(PieceLabel::Inc4, t4, kInf);
        }
        break;
      }
    }
    cache_->breakpoints = bp;
    return s;
  }

  DoubleWellSpec g_;
  PotentialProcess v_;
  double beta_;
  EffectiveOptions opt_;
  Regime regime_ = Regime::WeakI;
  bool deterministic_ = true;
  double A_ = 0.0, B_ = 1.0, margin_ = 1.0;
  std::vector<PathRealization> paths_;
  std::vector<std::vector<std::pair<double, double>>> segments_;
  std::vector<double> mean_v_;
  std::shared_ptr<Cache> cache_;
};

struct EffectiveCurve {
  Regime regime = Regime::WeakI;
  double beta = 0.0;
  std::string g_id;      // canonical orientation
  std::string v_id;
  bool mirrored = false;  // built for G(-p)
  std::vector<double> theta;
  std::vector<double> hbar;
  std::vector<double> std_err;
  std::vector<PieceLabel> labels;
  std::vector<double> heights;  // flat height per point, NaN off flats
  std::vector<CurveBreakpoint> breakpoints;

  std::size_t size() const { return theta.size(); }

  // Linear interpolation on the grid.
  double value_at(double t) const {
    if (theta.empty()) fail(ErrorKind::OutOfRange, "empty curve");
    if (t <= theta.front()) return hbar.front();
    if (t >= theta.back()) return hbar.back();
    std::size_t k = static_cast<std::size_t>(std::upper_bound(theta.begin(), theta.end(), t) - theta.begin());
    double w = (t - theta[k - 1]) / (theta[k] - theta[k - 1]);
    return hbar[k - 1] + w * (hbar[k] - hbar[k - 1]);
  }
};

// Uniform grid over the breakpoint span (plus margins) merged with every breakpoint and its neighbours.
inline std::vector<double> default_theta_grid(const EffectiveModel& model, std::size_t n = 201, double pad = 1.0) {
  std::vector<double> bps;
  for (const CurveBreakpoint& b : model.breakpoints()) bps.push_back(b.theta);
  for (const auto& f : model.interior_flats()) {
    bps.push_back(f.pair.lower.value);
    bps.push_back(f.pair.upper.value);
  }
  double lo = *std::min_element(bps.begin(), bps.end()) - pad;
  double hi = *std::max_element(bps.begin(), bps.end()) + pad;
  std::vector<double> g;
  for (std::size_t k = 0; k < n; ++k) g.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1));
  const double eps = 1e-7 * (hi - lo);
  for (double b : bps) {
    g.push_back(b);
    g.push_back(b - eps);
    g.push_back(b + eps);
  }
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

// H on the grid; a mirrored model (G(-p)) is evaluated at -theta of the reflected problem.
inline EffectiveCurve assemble_curve(const EffectiveModel& model, std::vector<double> grid, bool mirrored = false) {
  std::sort(grid.begin(), grid.end());
  EffectiveCurve c;
  c.regime = model.regime();
  c.beta = model.beta();
  c.g_id = model.hamiltonian().id();
  c.v_id = model.process().id();
  c.mirrored = mirrored;
  const double s = mirrored ? -1.0 : 1.0;
  std::vector<CurveValue> vals(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) vals[k] = model.evaluate(s * grid[k]);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    c.theta.push_back(grid[k]);
    c.hbar.push_back(vals[k].hbar);
    c.std_err.push_back(vals[k].std_err);
    c.labels.push_back(vals[k].label);
    c.heights.push_back(is_flat(vals[k].label) ? vals[k].height : std::numeric_limits<double>::quiet_NaN());
  }
  for (const CurveBreakpoint& b : model.breakpoints()) c.breakpoints.push_back({b.name, s * b.theta, b.std_err});
  return c;
}

inline EffectiveCurve assemble_curve(const DoubleWellSpec& g, const PotentialProcess& v, double beta,
                                     const std::vector<double>& grid, EffectiveOptions opt = {}) {
  EffectiveModel model(g, v, beta, opt);
  return assemble_curve(model, grid, g.reflected());
}

// Nonincreasing then nondecreasing on the grid, within tol.
inline bool is_quasiconvex(const std::vector<double>& h, double tol = 1e-6) {
  if (h.size() < 3) return true;
  std::size_t k = static_cast<std::size_t>(std::min_element(h.begin(), h.end()) - h.begin());
  for (std::size_t i = 0; i < k; ++i)
    if (h[i + 1] > h[i] + tol) return false;
  for (std::size_t i = k; i + 1 < h.size(); ++i)
    if (h[i + 1] < h[i] - tol) return false;
  return true;
}

inline bool is_quasiconvex(const EffectiveCurve& c, double tol = 1e-6) {
  double t = tol;
  for (double e : c.std_err) t = std::max(t, 3.0 * e);
  return is_quasiconvex(c.hbar, t);
}

// theta <= 0 from the left curve, theta > 0 from the mirrored one.
inline EffectiveCurve glue_symmetric(const EffectiveCurve& minus, const EffectiveCurve& plus) {
  if (std::abs(minus.beta - plus.beta) > 0.0) fail(ErrorKind::MismatchedParams, "curves use different beta");
  if (minus.v_id != plus.v_id) fail(ErrorKind::MismatchedParams, "curves use different potentials");
  if (minus.g_id != plus.g_id) fail(ErrorKind::MismatchedParams, "curves use different double wells");
  if (minus.mirrored || !plus.mirrored) fail(ErrorKind::MismatchedParams, "expected (G, mirrored G) in that order");
  EffectiveCurve out;
  out.regime = minus.regime;
  out.beta = minus.beta;
  out.g_id = minus.g_id;
  out.v_id = minus.v_id;
  auto take = [&](const EffectiveCurve& c, bool left) {
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (left ? c.theta[k] > 0.0 : c.theta[k] <= 0.0) continue;
      out.theta.push_back(c.theta[k]);
      out.hbar.push_back(c.hbar[k]);
      out.std_err.push_back(c.std_err[k]);
      out.labels.push_back(c.labels[k]);
      out.heights.push_back(c.heights[k]);
    }
    for (const CurveBreakpoint& b : c.breakpoints)
      if (left ? b.theta <= 0.0 : b.theta > 0.0) out.breakpoints.push_back(b);
  };
  take(minus, true);
  take(plus, false);
  return out;
}

}  // namespace hbar
