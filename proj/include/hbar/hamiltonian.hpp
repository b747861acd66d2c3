#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hbar/error.hpp"
#include "hbar/numeric.hpp"

namespace hbar {

enum class GFamily { PiecewiseLinear, Quartic, Tabulated, Custom };

inline const char* to_string(GFamily f) {
  switch (f) {
    case GFamily::PiecewiseLinear: return "pl-fixture";
    case GFamily::Quartic: return "quartic";
    case GFamily::Tabulated: return "tabulated";
    case GFamily::Custom: return "custom";
  }
  return "?";
}

struct Branch {
  double lo = 0.0, hi = 0.0;              // domain, may be infinite
  double range_lo = 0.0, range_hi = 0.0;  // image, may be infinite
  bool increasing = true;
  std::function<double(double)> value;
  std::function<double(double)> inverse;  // empty: bisection
  bool affine_inverse = false;
};

// Double-well G stored in canonical orientation (wells on the negative axis).
// A reflected spec evaluates G(-p); everything else works on the canonical branches.
class DoubleWellSpec {
 public:
  static DoubleWellSpec piecewise_linear(double m, double M, double p_m = -2.0, double p_M = -1.0,
                                         double left_slope = 1.0, double right_slope = 1.0) {
    check_shape(p_m, p_M, m, M);
    if (!(left_slope > 0.0) || !(right_slope > 0.0))
      fail(ErrorKind::Config, "outer slopes of the piecewise-linear G must be positive");
    DoubleWellSpec s;
    s.family_ = GFamily::PiecewiseLinear;
    s.p_m_ = p_m;
    s.p_M_ = p_M;
    s.m_ = m;
    s.M_ = M;
    s.params_ = {left_slope, right_slope};
    const double s2 = (M - m) / (p_M - p_m);
    s.branches_[0] = {-kInf, p_m, m, kInf, false,
                      [=](double p) { return m + left_slope * (p_m - p); },
                      [=](double v) { return p_m - (v - m) / left_slope; }, true};
    s.branches_[1] = {p_m, p_M, m, M, true,
                      [=](double p) { return m + s2 * (p - p_m); },
                      [=](double v) { return p_m + (v - m) / s2; }, true};
    s.branches_[2] = {p_M, 0.0, 0.0, M, false,
                      [=](double p) { return M * p / p_M; },
                      [=](double v) { return v * p_M / M; }, true};
    s.branches_[3] = {0.0, kInf, 0.0, kInf, true,
                      [=](double p) { return right_slope * p; },
                      [=](double v) { return v / right_slope; }, true};
    s.lipschitz_pl_ = std::max({left_slope, s2, M / -p_M, right_slope});
    return s;
  }

  // G'(p) = c p (p - p_M)(p - p_m), G(0) = 0.
  static DoubleWellSpec quartic(double p_m, double p_M, double c) {
    if (!(c > 0.0)) fail(ErrorKind::Config, "quartic scale must be positive");
    auto g = [=](double p) {
      return c * (p * p * p * p / 4.0 - (p_M + p_m) * p * p * p / 3.0 + p_M * p_m * p * p / 2.0);
    };
    DoubleWellSpec s = from_function(p_m, p_M, g);
    s.family_ = GFamily::Quartic;
    s.params_ = {c};
    return s;
  }

  // Piecewise-linear interpolation of (p, G) pairs, linear extension past both ends.
  static DoubleWellSpec tabulated(std::vector<std::pair<double, double>> table) {
    std::sort(table.begin(), table.end());
    if (table.size() < 4) fail(ErrorKind::Config, "tabulated G needs at least 4 points");
    std::vector<int> turns;
    for (std::size_t i = 1; i + 1 < table.size(); ++i) {
      double dl = table[i].second - table[i - 1].second;
      double dr = table[i + 1].second - table[i].second;
      if (dl == 0.0 || dr == 0.0) fail(ErrorKind::Config, "tabulated G has a flat segment");
      if ((dl < 0.0) != (dr < 0.0)) turns.push_back(static_cast<int>(i));
    }
    if (turns.size() != 3 || table.front().second <= table[1].second)
      fail(ErrorKind::Config, "tabulated G is not a double well (expected min, max, min)");
    double p_m = table[turns[0]].first, p_M = table[turns[1]].first;
    if (table[turns[2]].first != 0.0 || table[turns[2]].second != 0.0)
      fail(ErrorKind::Config, "tabulated G must have its absolute minimum G(0)=0 as a table point");
    auto pts = std::make_shared<std::vector<std::pair<double, double>>>(std::move(table));
    auto g = [pts](double p) {
      const auto& t = *pts;
      std::size_t n = t.size();
      std::size_t i;
      if (p <= t[0].first)
        i = 0;
      else if (p >= t[n - 1].first)
        i = n - 2;
      else
        i = static_cast<std::size_t>(std::upper_bound(t.begin(), t.end(), std::make_pair(p, kInf)) - t.begin()) - 1;
      double x0 = t[i].first, x1 = t[i + 1].first;
      return t[i].second + (t[i + 1].second - t[i].second) * (p - x0) / (x1 - x0);
    };
    DoubleWellSpec s = from_function(p_m, p_M, g);
    s.family_ = GFamily::Tabulated;
    for (auto& [p, v] : *pts) {
      s.params_.push_back(p);
      s.params_.push_back(v);
    }
    return s;
  }

  // Black-box G: inverses by bisection, Lipschitz bound by sampling.
  static DoubleWellSpec from_function(double p_m, double p_M, std::function<double(double)> g) {
    double m = g(p_m), M = g(p_M);
    check_shape(p_m, p_M, m, M);
    if (std::abs(g(0.0)) > 1e-14) fail(ErrorKind::Config, "G(0) must be 0");
    DoubleWellSpec s;
    s.family_ = GFamily::Custom;
    s.p_m_ = p_m;
    s.p_M_ = p_M;
    s.m_ = m;
    s.M_ = M;
    s.branches_[0] = {-kInf, p_m, m, kInf, false, g, {}, false};
    s.branches_[1] = {p_m, p_M, m, M, true, g, {}, false};
    s.branches_[2] = {p_M, 0.0, 0.0, M, false, g, {}, false};
    s.branches_[3] = {0.0, kInf, 0.0, kInf, true, g, {}, false};
    s.check_monotone_sampled();
    return s;
  }

  GFamily family() const { return family_; }
  double p_m() const { return p_m_; }
  double p_M() const { return p_M_; }
  double m() const { return m_; }
  double M() const { return M_; }
  bool reflected() const { return reflected_; }
  const std::vector<double>& params() const { return params_; }
  const Branch& branch(int i) const { return branches_.at(static_cast<std::size_t>(i - 1)); }

  DoubleWellSpec mirror() const {
    DoubleWellSpec s = *this;
    s.reflected_ = !reflected_;
    return s;
  }
  DoubleWellSpec canonical() const {
    DoubleWellSpec s = *this;
    s.reflected_ = false;
    return s;
  }

  // G in the oriented coordinates.
  double operator()(double p) const { return canonical_value(reflected_ ? -p : p); }

  double canonical_value(double p) const {
    if (p <= p_m_) return branches_[0].value(p);
    if (p <= p_M_) return branches_[1].value(p);
    if (p <= 0.0) return branches_[2].value(p);
    return branches_[3].value(p);
  }

  double branch_value(int i, double p) const {
    const Branch& b = branch(i);
    if (p < b.lo || p > b.hi) fail(ErrorKind::OutOfRange, "p outside the domain of branch " + std::to_string(i));
    return b.value(p);
  }

  // Inverse of canonical branch i; values within range_tol of the image are clamped.
  double branch_inverse(int i, double v, double range_tol = 1e-9) const {
    const Branch& b = branch(i);
    if (v < b.range_lo - range_tol || v > b.range_hi + range_tol || std::isnan(v))
      fail(ErrorKind::OutOfRange, "value " + std::to_string(v) + " outside the range of branch " + std::to_string(i));
    v = std::clamp(v, b.range_lo, b.range_hi);
    if (b.inverse) return std::clamp(b.inverse(v), b.lo, b.hi);
    return bisect_inverse(b, v);
  }

  // Exact extrema of canonical G on [a, b]: endpoints plus interior critical points.
  double sup_on(double a, double b) const {
    double s = std::max(canonical_value(a), canonical_value(b));
    if (a < p_M_ && p_M_ < b) s = std::max(s, M_);
    return s;
  }
  double inf_on(double a, double b) const {
    double s = std::min(canonical_value(a), canonical_value(b));
    if (a < p_m_ && p_m_ < b) s = std::min(s, m_);
    if (a < 0.0 && 0.0 < b) s = std::min(s, 0.0);
    return s;
  }

  // Upper bound on |G'| over [-P, P].
  double lipschitz_bound(double P) const {
    if (family_ == GFamily::PiecewiseLinear) return lipschitz_pl_;
    const int n = 20000;
    double h = 2.0 * P / n, L = 0.0;
    for (int k = 0; k < n; ++k) {
      double a = -P + k * h;
      L = std::max(L, std::abs(canonical_value(a + h) - canonical_value(a)) / h);
    }
    return 1.02 * L;
  }

  std::string id() const {
    std::ostringstream os;
    os.precision(17);
    os << to_string(family_) << ":p_m=" << p_m_ << ",p_M=" << p_M_ << ",m=" << m_ << ",M=" << M_;
    for (double x : params_) os << "," << x;
    if (reflected_) os << ",reflected";
    return os.str();
  }

 private:
  static void check_shape(double p_m, double p_M, double m, double M) {
    if (!(p_m < p_M && p_M < 0.0)) fail(ErrorKind::Config, "need p_m < p_M < 0");
    if (!(0.0 <= m && m < M)) fail(ErrorKind::Config, "need 0 <= m < M");
  }

  double bisect_inverse(const Branch& b, double v) const {
    const double tol = 1e-13;
    double lo = b.lo, hi = b.hi;
    auto f = b.value;
    if (std::isinf(lo)) lo = numeric::expand_bracket(f, v, hi, -1.0, b.increasing);
    if (std::isinf(hi)) hi = numeric::expand_bracket(f, v, lo, +1.0, b.increasing);
    return numeric::solve_monotone(f, v, lo, hi, b.increasing, tol);
  }

  void check_monotone_sampled() const {
    const int n = 2000;
    for (int i = 1; i <= 4; ++i) {
      const Branch& b = branch(i);
      double lo = std::isinf(b.lo) ? b.hi - 50.0 : b.lo;
      double hi = std::isinf(b.hi) ? b.lo + 50.0 : b.hi;
      double prev = b.value(lo);
      for (int k = 1; k <= n; ++k) {
        double cur = b.value(lo + (hi - lo) * k / n);
        if (b.increasing ? !(cur > prev) : !(cur < prev))
          fail(ErrorKind::Config, "G is not strictly monotone on branch " + std::to_string(i));
        prev = cur;
      }
    }
  }

  GFamily family_ = GFamily::PiecewiseLinear;
  double p_m_ = -2.0, p_M_ = -1.0, m_ = 0.0, M_ = 1.0;
  std::vector<double> params_;
  std::array<Branch, 4> branches_;
  bool reflected_ = false;
  double lipschitz_pl_ = 0.0;
};

enum class Regime { WeakI, MediumEasyII, MediumII, StrongEasyIII, StrongIII };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::WeakI: return "WeakI";
    case Regime::MediumEasyII: return "MediumEasyII";
    case Regime::MediumII: return "MediumII";
    case Regime::StrongEasyIII: return "StrongEasyIII";
    case Regime::StrongIII: return "StrongIII";
  }
  return "?";
}

inline Regime classify_regime(double m, double M, double beta, double eq_tol = 1e-9) {
  if (!(beta > 0.0)) fail(ErrorKind::Config, "beta must be positive");
  const double top = m + beta;
  if (beta < M - eq_tol) {
    if (top < M - eq_tol) return Regime::WeakI;
    if (top <= M + eq_tol) return Regime::MediumEasyII;
    return Regime::MediumII;
  }
  return (m <= eq_tol) ? Regime::StrongEasyIII : Regime::StrongIII;
}

inline Regime classify_regime(const DoubleWellSpec& g, double beta, double eq_tol = 1e-9) {
  return classify_regime(g.m(), g.M(), beta, eq_tol);
}

}  // namespace hbar
