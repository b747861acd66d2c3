#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "hbar/error.hpp"
#include "hbar/numeric.hpp"
#include "hbar/potential.hpp"

namespace hbar {

struct Levels {
  double lambda = 0.0;
  double beta = 0.0;
  double m = 0.0;
  double M = 0.0;
  double tol = 1e-10;  // knot values within tol of m or M are snapped onto the level
};

enum class Pred { AtLeastM, AboveM, BelowLow, AtMostLow };

struct Hit {
  double x = 0.0;
  long long seg = 0;      // segment [knot seg, knot seg+1] holding x
  bool at_knot = false;   // x is knot `knot`
  long long knot = 0;
};

// g(x) = lambda - beta V(x) with snapped knot values; first-passage queries are solved exactly per segment.
class LevelFunction {
 public:
  LevelFunction(const PathRealization& path, const Levels& lv) : path_(path), lv_(lv) {}

  const Levels& levels() const { return lv_; }
  const PathRealization& path() const { return path_; }

  double g_knot(long long k) const { return snap(lv_.lambda - lv_.beta * path_.knot_v(k)); }

  double g_at(double x) const {
    if (!path_.piecewise_linear()) return lv_.lambda - lv_.beta * path_.exact(x);
    long long k = path_.segment_of(x);
    double x0 = path_.knot_x(k);
    double g0 = g_knot(k);
    if (x == x0) return g0;
    double x1 = path_.knot_x(k + 1), g1 = g_knot(k + 1);
    return g0 + (g1 - g0) * (x - x0) / (x1 - x0);
  }

  bool holds(Pred p, double g) const {
    switch (p) {
      case Pred::AtLeastM: return g >= lv_.M;
      case Pred::AboveM: return g > lv_.M;
      case Pred::BelowLow: return g < lv_.m;
      case Pred::AtMostLow: return g <= lv_.m;
    }
    return false;
  }

  // inf{x >= from : pred(g(x))}, searched up to `limit`.
  std::optional<Hit> first(Pred pred, double from, double limit) const {
    long long k = path_.segment_of(from);
    double gf = g_at(from);
    if (holds(pred, gf)) return Hit{from, k, path_.knot_x(k) == from, k};
    const double level = (pred == Pred::AtLeastM || pred == Pred::AboveM) ? lv_.M : lv_.m;
    const bool strict = (pred == Pred::AboveM || pred == Pred::BelowLow);
    double a = from, ga = gf;
    while (a <= limit) {
      double xb = path_.knot_x(k + 1);
      double gb = g_knot(k + 1);
      if (holds(pred, gb)) {
        Hit h;
        h.seg = k;
        if (strict && ga == level) {
          h.x = a;
          h.at_knot = (a == path_.knot_x(k));
          h.knot = k;
        } else if (!strict && gb == level) {
          h.x = xb;
          h.at_knot = true;
          h.knot = k + 1;
          h.seg = k + 1;
        } else {
          double x0 = path_.knot_x(k), g0 = g_knot(k);
          double t = (level - g0) / (gb - g0);
          h.x = std::clamp(x0 + t * (xb - x0), a, xb);
          if (!path_.piecewise_linear()) h.x = refine(level, std::max(a, x0), xb);
          if (h.x == xb) {
            h.at_knot = true;
            h.knot = k + 1;
            h.seg = k + 1;
          }
        }
        if (h.x > limit) return std::nullopt;
        return h;
      }
      a = xb;
      ga = gb;
      ++k;
    }
    return std::nullopt;
  }

 private:
  double snap(double g) const {
    if (std::abs(g - lv_.M) <= lv_.tol) return lv_.M;
    if (std::abs(g - lv_.m) <= lv_.tol) return lv_.m;
    return g;
  }

  // Bisection on the exact callable inside a bracketing segment.
  double refine(double level, double a, double b) const {
    auto g = [&](double x) { return lv_.lambda - lv_.beta * path_.exact(x); };
    bool up = g(b) > g(a);
    for (int it = 0; it < 200 && b - a > lv_.tol; ++it) {
      double mid = 0.5 * (a + b);
      if ((g(mid) < level) == up)
        a = mid;
      else
        b = mid;
    }
    return 0.5 * (a + b);
  }

  const PathRealization& path_;
  Levels lv_;
};

enum class LadderKind { Lower, Upper };

inline const char* to_string(LadderKind k) { return k == LadderKind::Lower ? "lower" : "upper"; }

// Alternating first-passage sequence of one kind. Lower: a = x_i (g >= M), b = y_i (g < m).
// Upper: a = x_i (g > M), b = y_i (g <= m). Element j of the vectors has ladder index first + j.
struct LadderSequence {
  LadderKind kind = LadderKind::Lower;
  long long first = 0;
  std::vector<Hit> a;  // M-crossings
  std::vector<Hit> b;  // m-crossings; b[j] follows a[j]; may be one shorter than a
  bool left_truncated = true;
  bool right_truncated = true;

  long long last_a() const { return first + static_cast<long long>(a.size()) - 1; }
  long long last_b() const { return first + static_cast<long long>(b.size()) - 1; }
  bool has_a(long long i) const { return i >= first && i <= last_a(); }
  bool has_b(long long i) const { return i >= first && i <= last_b(); }
  double x(long long i) const {
    if (!has_a(i)) fail(ErrorKind::WindowTooShort, "ladder index outside the realized truncation");
    return a[static_cast<std::size_t>(i - first)].x;
  }
  double y(long long i) const {
    if (!has_b(i)) fail(ErrorKind::WindowTooShort, "ladder index outside the realized truncation");
    return b[static_cast<std::size_t>(i - first)].x;
  }
  const Hit& a_hit(long long i) const { return a.at(static_cast<std::size_t>(i - first)); }
  const Hit& b_hit(long long i) const { return b.at(static_cast<std::size_t>(i - first)); }
};

struct CrossingLadder {
  double lambda = 0.0;
  LadderSequence lower;
  LadderSequence upper;
  const LadderSequence& get(LadderKind k) const { return k == LadderKind::Lower ? lower : upper; }
};

inline void check_ladder_lambda(const Levels& lv) {
  if (!(lv.M < lv.m + lv.beta))
    fail(ErrorKind::Regime, "crossing ladders need max{beta,M} < m+beta");
  if (!(lv.lambda >= lv.beta && lv.lambda > lv.M && lv.lambda < lv.m + lv.beta))
    fail(ErrorKind::Regime, "lambda must lie in [beta,inf) and (M, m+beta)");
}

// Builds one ladder on [lo, hi]. Scanning starts at the first point where g is strictly/weakly below m
// (a reset); the first M-crossing after any reset is a genuine ladder point, so no earlier history is needed.
// Stops early once an M-crossing beyond `stop_after` and its partner have been found.
inline LadderSequence build_sequence(const LevelFunction& f, LadderKind kind, double lo, double hi,
                                     double stop_after = kInf) {
  const Pred up = kind == LadderKind::Lower ? Pred::AtLeastM : Pred::AboveM;
  const Pred down = kind == LadderKind::Lower ? Pred::BelowLow : Pred::AtMostLow;
  LadderSequence s;
  s.kind = kind;
  auto reset = f.first(down, lo, hi);
  if (!reset) fail(ErrorKind::WindowTooShort, "no reset below m inside the window");
  double pos = reset->x;
  for (;;) {
    auto xa = f.first(up, pos, hi);
    if (!xa) break;
    s.a.push_back(*xa);
    auto yb = f.first(down, xa->x, hi);
    if (!yb) break;
    s.b.push_back(*yb);
    pos = yb->x;
    if (xa->x > stop_after) break;
  }
  // Anchor: lower uses x_{-1} <= 0 < x_0, upper uses x_{-1} < 0 <= x_0.
  std::size_t j0 = 0;
  while (j0 < s.a.size() && (kind == LadderKind::Lower ? s.a[j0].x <= 0.0 : s.a[j0].x < 0.0)) ++j0;
  if (j0 == 0 || j0 == s.a.size()) fail(ErrorKind::WindowTooShort, "window does not straddle the ladder anchor");
  s.first = -static_cast<long long>(j0);
  return s;
}

inline CrossingLadder build_ladder(const PathRealization& path, const Levels& lv) {
  check_ladder_lambda(lv);
  LevelFunction f(path, lv);
  CrossingLadder L;
  L.lambda = lv.lambda;
  L.lower = build_sequence(f, LadderKind::Lower, path.window().lo, path.window().hi);
  L.upper = build_sequence(f, LadderKind::Upper, path.window().lo, path.window().hi);
  return L;
}

struct EventFlags {
  bool in_U = false;
  bool in_D = false;
};

// U: g has no local maximum at x_0 (lower); D: g has no local minimum at y_0 (upper).
inline EventFlags events_from(const LevelFunction& f, const LadderSequence& lower, const LadderSequence& upper) {
  auto leaves_strictly = [&](const Hit& h, bool upward, double level) {
    if (!h.at_knot) return true;  // interior crossing of a linear segment is transversal
    double gn = f.g_knot(h.knot + 1);
    return upward ? gn > level : gn < level;
  };
  EventFlags e;
  e.in_U = leaves_strictly(lower.a_hit(0), true, f.levels().M);
  e.in_D = leaves_strictly(upper.b_hit(0), false, f.levels().m);
  return e;
}

// Only the neighbourhood of the anchor is scanned; the scan start moves left until anchoring succeeds.
inline EventFlags detect_events(const PathRealization& path, const Levels& lv) {
  check_ladder_lambda(lv);
  LevelFunction f(path, lv);
  const Window& w = path.window();
  for (double reach = 16.0;; reach *= 4.0) {
    double lo = std::max(w.lo, -reach);
    try {
      auto lower = build_sequence(f, LadderKind::Lower, lo, w.hi, 0.0);
      auto upper = build_sequence(f, LadderKind::Upper, lo, w.hi, 0.0);
      if (!lower.has_a(0) || !upper.has_b(0)) fail(ErrorKind::WindowTooShort, "ladder ended before index 0");
      return events_from(f, lower, upper);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::WindowTooShort || lo <= w.lo) throw;
    }
  }
}

struct PudEstimate {
  double p_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 1.0;
  std::size_t used = 0;
  std::size_t discarded = 0;
  std::size_t successes = 0;
  double half_width() const { return 0.5 * (ci_hi - ci_lo); }
};

inline PudEstimate estimate_pUD(const PotentialProcess& process, const Levels& lv, std::size_t n, std::uint64_t seed,
                                double window_length = 2000.0, unsigned jobs = 1) {
  std::vector<int> outcome(n, -1);
  numeric::parallel_for(n, jobs, [&](std::size_t s) {
    PathRealization p =
        process.sample_path({-window_length / 2, window_length / 2}, numeric::derive_seed(seed, s));
    try {
      EventFlags e = detect_events(p, lv);
      outcome[s] = (e.in_U && e.in_D) ? 1 : 0;
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::WindowTooShort) throw;
    }
  });
  PudEstimate r;
  for (int o : outcome) {
    if (o < 0) {
      ++r.discarded;
      continue;
    }
    ++r.used;
    r.successes += static_cast<std::size_t>(o);
  }
  r.p_hat = r.used ? static_cast<double>(r.successes) / static_cast<double>(r.used) : 0.0;
  auto ci = numeric::wilson_interval(r.successes, r.used);
  r.ci_lo = ci.lo;
  r.ci_hi = ci.hi;
  return r;
}

}  // namespace hbar
