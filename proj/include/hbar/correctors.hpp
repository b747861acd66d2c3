#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hbar/crossings.hpp"
#include "hbar/error.hpp"
#include "hbar/hamiltonian.hpp"
#include "hbar/numeric.hpp"
#include "hbar/potential.hpp"

namespace hbar {

// f' = G_branch^{-1}(lambda - beta V) on [a, b].
struct Piece {
  double a = 0.0;
  double b = 0.0;
  int branch = 1;
  double lambda = 0.0;
};

struct Kink {
  double x = 0.0;
  double left_slope = 0.0;
  double right_slope = 0.0;
};

class PiecewiseCorrector {
 public:
  PiecewiseCorrector(DoubleWellSpec g, double beta, PathRealization path, std::vector<Piece> pieces)
      : g_(std::move(g)), beta_(beta), path_(std::move(path)), pieces_(std::move(pieces)) {
    if (pieces_.empty()) fail(ErrorKind::OutOfWindow, "corrector has no pieces");
    cum_.resize(pieces_.size() + 1, 0.0);
    for (std::size_t i = 0; i < pieces_.size(); ++i) cum_[i + 1] = cum_[i] + piece_integral(pieces_[i], pieces_[i].a, pieces_[i].b);
    if (!(lo() <= 0.0 && 0.0 <= hi())) fail(ErrorKind::OutOfWindow, "corrector coverage must contain the anchor x=0");
    f0_ = primitive(0.0);
  }

  const DoubleWellSpec& hamiltonian() const { return g_; }
  double beta() const { return beta_; }
  const PathRealization& path() const { return path_; }
  const std::vector<Piece>& pieces() const { return pieces_; }
  double lo() const { return pieces_.front().a; }
  double hi() const { return pieces_.back().b; }

  double slope_of(const Piece& p, double x) const {
    return g_.branch_inverse(p.branch, p.lambda - beta_ * path_.value_unchecked(x));
  }

  std::size_t piece_index(double x) const {
    check_inside(x);
    auto it = std::upper_bound(pieces_.begin(), pieces_.end(), x, [](double v, const Piece& p) { return v < p.a; });
    std::size_t i = it == pieces_.begin() ? 0 : static_cast<std::size_t>(it - pieces_.begin()) - 1;
    return std::min(i, pieces_.size() - 1);
  }

  // One-sided derivative; right-sided by default.
  double derivative(double x, bool right = true) const {
    std::size_t i = piece_index(x);
    if (!right && i > 0 && x == pieces_[i].a) --i;
    return slope_of(pieces_[i], x);
  }

  // f(x) with f(0) = 0.
  double value(double x) const { return primitive(x) - f0_; }

  double integral(double a, double b) const { return value(b) - value(a); }

  std::vector<Kink> kinks() const {
    std::vector<Kink> out;
    for (std::size_t i = 0; i + 1 < pieces_.size(); ++i) {
      double x = pieces_[i].b;
      double l = slope_of(pieces_[i], x), r = slope_of(pieces_[i + 1], x);
      if (std::abs(l - r) > 1e-13 * (1.0 + std::abs(l))) out.push_back({x, l, r});
    }
    return out;
  }

 private:
  void check_inside(double x) const {
    if (x < lo() - 1e-12 || x > hi() + 1e-12)
      fail(ErrorKind::OutOfWindow, "x=" + std::to_string(x) + " outside corrector coverage");
  }

  double primitive(double x) const {
    std::size_t i = piece_index(x);
    return cum_[i] + piece_integral(pieces_[i], pieces_[i].a, std::min(x, pieces_[i].b));
  }

  double piece_integral(const Piece& p, double s, double t) const {
    if (!(t > s)) return 0.0;
    const Branch& br = g_.branch(p.branch);
    auto inv = [&](double v) { return g_.branch_inverse(p.branch, p.lambda - beta_ * v); };
    if (!path_.piecewise_linear())
      return numeric::integrate([&](double x) { return inv(path_.exact(x)); }, s, t);
    double total = 0.0;
    long long k = path_.segment_of(s);
    double x = s, vx = path_.value_unchecked(s);
    while (x < t) {
      double x1 = path_.knot_x(k + 1), v1 = path_.knot_v(k + 1);
      double xe = std::min(t, x1);
      double ve = xe == x1 ? v1 : vx + (v1 - vx) * (xe - x) / (x1 - x);
      if (br.affine_inverse || vx == ve) {
        total += (xe - x) * inv(0.5 * (vx + ve));
      } else {
        double x0 = x, v0 = vx, xe0 = xe, ve0 = ve;
        total += numeric::integrate([&](double y) { return inv(v0 + (ve0 - v0) * (y - x0) / (xe0 - x0)); }, x0, xe0);
      }
      x = xe;
      vx = ve;
      ++k;
    }
    return total;
  }

  DoubleWellSpec g_;
  double beta_;
  PathRealization path_;
  std::vector<Piece> pieces_;
  std::vector<double> cum_;
  double f0_ = 0.0;
};

inline bool admissible_smooth(const DoubleWellSpec& g, double beta, int i, double lambda, double tol = 1e-9) {
  const double m = g.m(), M = g.M();
  switch (i) {
    case 1: return lambda >= m + beta - tol;
    case 2: return lambda >= m + beta - tol && lambda <= M + tol;
    case 3: return lambda >= beta - tol && lambda <= M + tol;
    case 4: return lambda >= beta - tol;
    default: return false;
  }
}

inline PiecewiseCorrector smooth_corrector(int i, double lambda, const PathRealization& path, const DoubleWellSpec& g,
                                           double beta) {
  if (i < 1 || i > 4) fail(ErrorKind::Config, "branch index must be 1..4");
  if (!admissible_smooth(g, beta, i, lambda))
    fail(ErrorKind::Regime, "lambda outside the admissible interval of branch " + std::to_string(i));
  return PiecewiseCorrector(g.canonical(), beta, path, {{path.window().lo, path.window().hi, i, lambda}});
}

inline std::vector<Piece> ladder_pieces(const LadderSequence& s, double lambda) {
  std::vector<Piece> out;
  for (long long i = s.first; s.has_a(i); ++i) {
    if (!s.has_b(i)) break;
    out.push_back({s.x(i), s.y(i), 1, lambda});
    if (!s.has_a(i + 1)) break;
    out.push_back({s.y(i), s.x(i + 1), 3, lambda});
  }
  return out;
}

inline Levels levels_for(const DoubleWellSpec& g, double beta, double lambda) {
  Levels lv;
  lv.lambda = lambda;
  lv.beta = beta;
  lv.m = g.m();
  lv.M = g.M();
  return lv;
}

inline PiecewiseCorrector ladder_corrector(LadderKind kind, double lambda, const PathRealization& path,
                                           const DoubleWellSpec& g, double beta) {
  CrossingLadder L = build_ladder(path, levels_for(g, beta, lambda));
  return PiecewiseCorrector(g.canonical(), beta, path, ladder_pieces(L.get(kind), lambda));
}

enum class RecipeTag {
  Smooth,
  LadderLower,
  LadderUpper,
  FlatBetaSub,
  FlatBetaSuper,
  FlatMbSub,
  FlatMbSuper,
  FlatMSub,
  FlatMSuper,
  EasyMSub,
  EasyMSuper,
  PossMSub,
  PossMSuper,
  PossMbSub,
  PossMbSuper,
  EasyBetaSub,
  EasyBetaSuper,
  StrongBetaSub,
  StrongBetaSuper,
  InteriorD,
  InteriorU,
};

inline constexpr std::pair<RecipeTag, const char*> kRecipeNames[] = {
    {RecipeTag::Smooth, "Smooth"},
    {RecipeTag::LadderLower, "LadderLower"},
    {RecipeTag::LadderUpper, "LadderUpper"},
    {RecipeTag::FlatBetaSub, "Flat_beta_sub"},
    {RecipeTag::FlatBetaSuper, "Flat_beta_super"},
    {RecipeTag::FlatMbSub, "Flat_mb_sub"},
    {RecipeTag::FlatMbSuper, "Flat_mb_super"},
    {RecipeTag::FlatMSub, "Flat_M_sub"},
    {RecipeTag::FlatMSuper, "Flat_M_super"},
    {RecipeTag::EasyMSub, "Easy_M_sub"},
    {RecipeTag::EasyMSuper, "Easy_M_super"},
    {RecipeTag::PossMSub, "PossM_sub"},
    {RecipeTag::PossMSuper, "PossM_super"},
    {RecipeTag::PossMbSub, "PossMB_sub"},
    {RecipeTag::PossMbSuper, "PossMB_super"},
    {RecipeTag::EasyBetaSub, "Easy_beta_sub"},
    {RecipeTag::EasyBetaSuper, "Easy_beta_super"},
    {RecipeTag::StrongBetaSub, "Strong_beta_sub"},
    {RecipeTag::StrongBetaSuper, "Strong_beta_super"},
    {RecipeTag::InteriorD, "Interior_d"},
    {RecipeTag::InteriorU, "Interior_u"},
};

inline const char* to_string(RecipeTag t) {
  for (auto& [tag, name] : kRecipeNames)
    if (tag == t) return name;
  return "?";
}

inline std::optional<RecipeTag> parse_recipe(const std::string& s) {
  for (auto& [tag, name] : kRecipeNames)
    if (s == name) return tag;
  return std::nullopt;
}

enum class Role { Sub, Super, Solution };

inline Role role(RecipeTag t) {
  switch (t) {
    case RecipeTag::Smooth:
    case RecipeTag::LadderLower:
    case RecipeTag::LadderUpper:
    case RecipeTag::InteriorD:
    case RecipeTag::InteriorU:
      return Role::Solution;
    case RecipeTag::FlatBetaSub:
    case RecipeTag::FlatMbSub:
    case RecipeTag::FlatMSub:
    case RecipeTag::EasyMSub:
    case RecipeTag::PossMSub:
    case RecipeTag::PossMbSub:
    case RecipeTag::EasyBetaSub:
    case RecipeTag::StrongBetaSub:
      return Role::Sub;
    default:
      return Role::Super;
  }
}

struct Recipe {
  RecipeTag tag = RecipeTag::Smooth;
  double lambda = std::numeric_limits<double>::quiet_NaN();   // Smooth, Ladder*, Interior*
  double epsilon = std::numeric_limits<double>::quiet_NaN();  // concatenations; NaN picks the default
  int branch = 0;                                             // Smooth only
};

// First x >= from inside the window where V(x) equals target.
inline double find_value_point(const PathRealization& path, double target, double from = 0.0) {
  const double hi = path.window().hi;
  double x = from, vx = path.value_unchecked(from);
  if (vx == target) return x;
  long long k = path.segment_of(from);
  while (x < hi) {
    double x1 = path.knot_x(k + 1), v1 = path.knot_v(k + 1);
    if (!path.piecewise_linear()) v1 = path.exact(x1);
    if ((vx - target) * (v1 - target) <= 0.0) {
      double r = x + (target - vx) / (v1 - vx) * (x1 - x);
      if (!path.piecewise_linear()) {
        double a = x, b = x1;
        bool up = v1 > vx;
        for (int it = 0; it < 200 && b - a > 1e-13; ++it) {
          double mid = 0.5 * (a + b);
          if ((path.exact(mid) < target) == up)
            a = mid;
          else
            b = mid;
        }
        r = 0.5 * (a + b);
      }
      if (r > hi) break;
      return r;
    }
    x = x1;
    vx = v1;
    ++k;
  }
  fail(ErrorKind::JunctionNotFound, "V never reaches " + std::to_string(target) + " to the right of the anchor");
}

namespace detail {

inline PiecewiseCorrector splice(const PiecewiseCorrector& left, double J, const PiecewiseCorrector& right) {
  if (!(left.lo() < J && J <= left.hi() && right.lo() <= J && J < right.hi()))
    fail(ErrorKind::JunctionNotFound, "junction outside the coverage of the glued correctors");
  std::vector<Piece> out;
  for (const Piece& p : left.pieces())
    if (p.a < J) out.push_back({p.a, std::min(p.b, J), p.branch, p.lambda});
  for (const Piece& p : right.pieces())
    if (p.b > J) out.push_back({std::max(p.a, J), p.b, p.branch, p.lambda});
  return PiecewiseCorrector(left.hamiltonian(), left.beta(), left.path(), std::move(out));
}

inline double pick_epsilon(double eps, double width) {
  if (!(width > 0.0)) fail(ErrorKind::Regime, "empty epsilon range for this recipe");
  if (std::isnan(eps)) return 0.01 * width;
  if (!(eps > 0.0 && eps < width)) fail(ErrorKind::Regime, "epsilon outside its admissible range");
  return eps;
}

}  // namespace detail

inline PiecewiseCorrector concat_corrector(const Recipe& r, const DoubleWellSpec& gin, double beta,
                                           const PathRealization& path, double eq_tol = 1e-9) {
  const DoubleWellSpec g = gin.canonical();
  const double m = g.m(), M = g.M(), top = m + beta, bot = std::max(beta, M);
  auto need = [](bool ok, const char* what) {
    if (!ok) fail(ErrorKind::Regime, what);
  };
  auto smooth = [&](int i, double lam) { return smooth_corrector(i, lam, path, g, beta); };
  auto ladder = [&](LadderKind k, double lam) { return ladder_corrector(k, lam, path, g, beta); };
  auto lad_seq = [&](LadderKind k, double lam) { return build_ladder(path, levels_for(g, beta, lam)).get(k); };
  using detail::pick_epsilon;
  using detail::splice;

  switch (r.tag) {
    case RecipeTag::Smooth:
      return smooth(r.branch, r.lambda);
    case RecipeTag::LadderLower:
      return ladder(LadderKind::Lower, r.lambda);
    case RecipeTag::LadderUpper:
      return ladder(LadderKind::Upper, r.lambda);
    case RecipeTag::FlatBetaSub:
    case RecipeTag::FlatBetaSuper: {
      need(beta < M - eq_tol, "flat at beta needs beta < M");
      double eps = pick_epsilon(r.epsilon, beta);
      double y0 = find_value_point(path, (beta - eps) / beta);
      return r.tag == RecipeTag::FlatBetaSub ? splice(smooth(4, beta), y0, smooth(3, beta))
                                             : splice(smooth(3, beta), y0, smooth(4, beta));
    }
    case RecipeTag::FlatMbSub:
    case RecipeTag::FlatMbSuper: {
      need(top <= M + eq_tol, "flat at m+beta through branch 2 needs m+beta <= M");
      double eps = pick_epsilon(r.epsilon, beta);
      double y0 = find_value_point(path, (beta - eps) / beta);
      return r.tag == RecipeTag::FlatMbSub ? splice(smooth(2, top), y0, smooth(1, top))
                                           : splice(smooth(1, top), y0, smooth(2, top));
    }
    case RecipeTag::FlatMSub:
    case RecipeTag::FlatMSuper: {
      need(beta < M - eq_tol && top <= M + eq_tol, "flat at M through branch 2 needs m+beta <= M");
      double eps = pick_epsilon(r.epsilon, beta);
      double x0 = find_value_point(path, eps / beta);
      return r.tag == RecipeTag::FlatMSub ? splice(smooth(3, M), x0, smooth(2, M))
                                          : splice(smooth(2, M), x0, smooth(3, M));
    }
    case RecipeTag::EasyMSub:
    case RecipeTag::EasyMSuper: {
      need(beta < M - eq_tol && std::abs(top - M) <= eq_tol, "medium easy case needs beta < M = m+beta");
      double eps = pick_epsilon(r.epsilon, beta);
      if (r.tag == RecipeTag::EasyMSub) {
        double x0 = find_value_point(path, eps / beta);
        return splice(smooth(3, M), x0, smooth(1, M));
      }
      double y0 = find_value_point(path, (beta - eps) / beta);
      return splice(smooth(1, M), y0, smooth(3, M));
    }
    case RecipeTag::PossMSub:
    case RecipeTag::PossMSuper: {
      need(beta < M - eq_tol && M < top - eq_tol, "needs beta < M < m+beta");
      double eps = pick_epsilon(r.epsilon, top - M);
      double lam = M + eps;
      auto seq = lad_seq(LadderKind::Lower, lam);
      auto lad = ladder(LadderKind::Lower, lam);
      return r.tag == RecipeTag::PossMSub ? splice(smooth(3, M), seq.x(0), lad)
                                          : splice(lad, seq.y(0), smooth(3, M));
    }
    case RecipeTag::PossMbSub:
    case RecipeTag::PossMbSuper: {
      need(bot < top - eq_tol, "needs max{beta,M} < m+beta");
      double eps = pick_epsilon(r.epsilon, top - bot);
      double lam = top - eps;
      auto seq = lad_seq(LadderKind::Upper, lam);
      auto lad = ladder(LadderKind::Upper, lam);
      return r.tag == RecipeTag::PossMbSub ? splice(lad, seq.x(0), smooth(1, top))
                                           : splice(smooth(1, top), seq.y(0), lad);
    }
    case RecipeTag::EasyBetaSub:
    case RecipeTag::EasyBetaSuper: {
      need(M <= beta + eq_tol && m <= eq_tol, "strong easy case needs M <= beta = m+beta");
      double eps = pick_epsilon(r.epsilon, beta);
      if (r.tag == RecipeTag::EasyBetaSub) {
        double x0 = find_value_point(path, eps / beta);
        return splice(smooth(4, beta), x0, smooth(1, beta));
      }
      double y0 = find_value_point(path, (beta - eps) / beta);
      return splice(smooth(1, beta), y0, smooth(4, beta));
    }
    case RecipeTag::StrongBetaSub:
    case RecipeTag::StrongBetaSuper: {
      need(M <= beta + eq_tol && beta < top - eq_tol, "needs M <= beta < m+beta");
      double eps = pick_epsilon(r.epsilon, m / 2.0);
      double z0 = find_value_point(path, (beta - eps) / beta);
      auto lad = ladder(LadderKind::Lower, beta + eps);
      return r.tag == RecipeTag::StrongBetaSub ? splice(smooth(4, beta), z0, lad) : splice(lad, z0, smooth(4, beta));
    }
    case RecipeTag::InteriorD:
    case RecipeTag::InteriorU: {
      need(bot < top - eq_tol && r.lambda > bot && r.lambda < top, "interior recipes need max{beta,M} < lambda < m+beta");
      CrossingLadder L = build_ladder(path, levels_for(g, beta, r.lambda));
      PiecewiseCorrector lo(g, beta, path, ladder_pieces(L.lower, r.lambda));
      PiecewiseCorrector up(g, beta, path, ladder_pieces(L.upper, r.lambda));
      return r.tag == RecipeTag::InteriorD ? splice(up, L.lower.x(0), lo) : splice(lo, L.upper.y(0), up);
    }
  }
  fail(ErrorKind::Config, "unknown recipe");
}

struct KinkCheck {
  double x = 0.0;
  double left_slope = 0.0;
  double right_slope = 0.0;
  bool concave = false;  // right slope < left slope: superdifferential is nonempty
  double level = 0.0;    // sup (concave) or inf (convex) of G over the slope interval, plus beta V(x)
};

struct ViscosityReport {
  double sub_level = -kInf;   // smallest lambda for which f is a subsolution
  double super_level = kInf;  // largest lambda for which f is a supersolution
  double max_residual = 0.0;  // smooth-region |G(f') + beta V - lambda_piece|
  std::size_t points_checked = 0;
  std::vector<KinkCheck> kinks;
};

inline ViscosityReport verify_viscosity(const PiecewiseCorrector& f) {
  const DoubleWellSpec& g = f.hamiltonian();
  const PathRealization& path = f.path();
  const double beta = f.beta();
  ViscosityReport rep;
  for (const Piece& p : f.pieces()) {
    rep.sub_level = std::max(rep.sub_level, p.lambda);
    rep.super_level = std::min(rep.super_level, p.lambda);
    auto check = [&](double x) {
      double s = f.slope_of(p, x);
      double r = std::abs(g.canonical_value(s) + beta * path.value_unchecked(x) - p.lambda);
      rep.max_residual = std::max(rep.max_residual, r);
      ++rep.points_checked;
    };
    check(p.a);
    check(p.b);
    long long k = path.segment_of(p.a);
    double prev = p.a;
    for (;;) {
      double xk = path.piecewise_linear() ? path.knot_x(k + 1) : std::min(p.b, prev + 0.25 * (p.b - p.a) + 1e-3);
      double stop = std::min(xk, p.b);
      check(0.5 * (prev + stop));
      if (stop >= p.b) break;
      check(stop);
      prev = stop;
      ++k;
    }
  }
  for (const Kink& k : f.kinks()) {
    KinkCheck c;
    c.x = k.x;
    c.left_slope = k.left_slope;
    c.right_slope = k.right_slope;
    c.concave = k.right_slope < k.left_slope;
    double bv = beta * path.value_unchecked(k.x);
    if (c.concave) {
      c.level = g.sup_on(k.right_slope, k.left_slope) + bv;
      rep.sub_level = std::max(rep.sub_level, c.level);
    } else {
      c.level = g.inf_on(k.left_slope, k.right_slope) + bv;
      rep.super_level = std::min(rep.super_level, c.level);
    }
    rep.kinks.push_back(c);
  }
  return rep;
}

enum class Side { Minus, Plus, Both };

struct SlopeAverage {
  double value = 0.0;
  double at_half = 0.0;
  double at_three_quarters = 0.0;
};

inline SlopeAverage slope_average(const PiecewiseCorrector& f, Side side) {
  auto avg = [&](double frac) {
    double a = side == Side::Plus ? 0.0 : frac * f.lo();
    double b = side == Side::Minus ? 0.0 : frac * f.hi();
    return f.integral(a, b) / (b - a);
  };
  return {avg(1.0), avg(0.5), avg(0.75)};
}

}  // namespace hbar
