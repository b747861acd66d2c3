#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hbar/error.hpp"
#include "hbar/numeric.hpp"

namespace hbar {

struct Atom {
  double value = 0.0;
  double prob = 0.0;
};

// One-site law: finitely many atoms plus an optional uniform component on [cont_lo, cont_hi].
struct Marginal {
  std::vector<Atom> atoms;
  double cont_lo = 0.0;
  double cont_hi = 0.0;
  double cont_weight = 0.0;

  void validate(const std::string& name) const {
    double total = cont_weight;
    for (const Atom& a : atoms) {
      if (!(a.prob > 0.0)) fail(ErrorKind::Config, name + ": atom probabilities must be positive");
      if (a.value < 0.0 || a.value > 1.0) fail(ErrorKind::Config, name + ": atom outside [0,1]");
      total += a.prob;
    }
    if (cont_weight < 0.0) fail(ErrorKind::Config, name + ": negative continuous weight");
    if (cont_weight > 0.0 && !(0.0 <= cont_lo && cont_lo < cont_hi && cont_hi <= 1.0))
      fail(ErrorKind::Config, name + ": continuous part must be a subinterval of [0,1]");
    if (std::abs(total - 1.0) > 1e-9) fail(ErrorKind::Config, name + ": probabilities must sum to 1");
  }

  double sample(double u) const {
    double acc = 0.0;
    for (const Atom& a : atoms) {
      acc += a.prob;
      if (u < acc) return a.value;
    }
    if (cont_weight > 0.0) {
      double t = std::clamp((u - acc) / cont_weight, 0.0, 1.0);
      return cont_lo + (cont_hi - cont_lo) * t;
    }
    return atoms.back().value;
  }

  bool has_atom(double v, double tol = 1e-12) const {
    return std::any_of(atoms.begin(), atoms.end(), [&](const Atom& a) { return std::abs(a.value - v) <= tol; });
  }

  double support_min() const {
    double s = cont_weight > 0.0 ? cont_lo : 1.0;
    for (const Atom& a : atoms) s = std::min(s, a.value);
    return s;
  }
  double support_max() const {
    double s = cont_weight > 0.0 ? cont_hi : 0.0;
    for (const Atom& a : atoms) s = std::max(s, a.value);
    return s;
  }

  std::vector<double> atom_values() const {
    std::vector<double> v;
    for (const Atom& a : atoms) v.push_back(a.value);
    std::sort(v.begin(), v.end());
    return v;
  }

  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    os << "{";
    for (const Atom& a : atoms) os << a.value << ":" << a.prob << ";";
    if (cont_weight > 0.0) os << "U[" << cont_lo << "," << cont_hi << "]:" << cont_weight;
    os << "}";
    return os.str();
  }
};

enum class ProcessKind { PeriodicSingleWell, PeriodicMultiWell, IidPiecewiseLinear, MarkovInterlaced, UserCallable };

inline const char* to_string(ProcessKind k) {
  switch (k) {
    case ProcessKind::PeriodicSingleWell: return "periodic-single-well";
    case ProcessKind::PeriodicMultiWell: return "periodic-multi-well";
    case ProcessKind::IidPiecewiseLinear: return "iid";
    case ProcessKind::MarkovInterlaced: return "markov";
    case ProcessKind::UserCallable: return "callable";
  }
  return "?";
}

struct Window {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
};

namespace detail {

enum : std::uint64_t { kStreamValue = 1, kStreamOffset = 2, kStreamCoin = 3 };

struct ProcessData {
  ProcessKind kind = ProcessKind::PeriodicSingleWell;
  double period = 1.0;
  std::vector<double> z, v;  // periodic knots on [0, period)
  Marginal mu1, mu2;         // iid uses mu1 only
  double c = 0.5;
  std::function<double(double, std::uint64_t)> callable;
  double step = 0.01;
  std::string label;
};

inline long long floor_ll(double x) { return static_cast<long long>(std::floor(x)); }
inline long long mod2(long long k) { return ((k % 2) + 2) % 2; }

}  // namespace detail

// One realization V(., omega) restricted to a window. Knot values are recomputed on demand
// from (seed, index), so long windows need no storage.
class PathRealization {
 public:
  PathRealization() = default;
  PathRealization(std::shared_ptr<const detail::ProcessData> data, Window window, std::uint64_t seed, double offset,
                  int coin, bool reflected)
      : data_(std::move(data)), window_(window), seed_(seed), offset_(offset), coin_(coin), reflected_(reflected) {}

  const Window& window() const { return window_; }
  std::uint64_t seed() const { return seed_; }
  double offset() const { return offset_; }
  bool reflected() const { return reflected_; }
  ProcessKind kind() const { return data_->kind; }
  bool periodic() const {
    return data_->kind == ProcessKind::PeriodicSingleWell || data_->kind == ProcessKind::PeriodicMultiWell;
  }
  bool piecewise_linear() const { return data_->kind != ProcessKind::UserCallable; }
  double period() const { return data_->period; }
  long long knots_per_period() const { return periodic() ? static_cast<long long>(data_->z.size()) : 1; }

  PathRealization with_window(Window w) const {
    PathRealization p = *this;
    p.window_ = w;
    return p;
  }
  // x -> V(-x, omega); the window is reflected too.
  PathRealization reflect() const {
    PathRealization p = *this;
    p.reflected_ = !reflected_;
    p.window_ = {-window_.hi, -window_.lo};
    return p;
  }

  double knot_x(long long k) const { return reflected_ ? -base_x(-k) : base_x(k); }
  double knot_v(long long k) const { return reflected_ ? base_v(-k) : base_v(k); }

  // Largest k with knot_x(k) <= x.
  long long segment_of(double x) const {
    long long k;
    if (!reflected_) {
      k = base_segment(x);
    } else {
      long long j = base_segment(-x);
      if (base_x(j) != -x) ++j;
      k = -j;
    }
    while (knot_x(k) > x) --k;
    while (knot_x(k + 1) <= x) ++k;
    return k;
  }

  // V at x without the window check.
  double value_unchecked(double x) const {
    if (!piecewise_linear()) return exact(x);
    long long k = segment_of(x);
    double x0 = knot_x(k), x1 = knot_x(k + 1);
    double v0 = knot_v(k), v1 = knot_v(k + 1);
    if (x == x0) return v0;
    return v0 + (v1 - v0) * (x - x0) / (x1 - x0);
  }

  double operator()(double x) const {
    const double slack = 1e-12 * (1.0 + std::abs(x));
    if (x < window_.lo - slack || x > window_.hi + slack)
      fail(ErrorKind::OutOfWindow, "x=" + std::to_string(x) + " outside the realized window");
    return value_unchecked(x);
  }

  // Underlying callable for non-piecewise-linear paths.
  double exact(double x) const {
    double xx = reflected_ ? -x : x;
    return std::clamp(data_->callable(xx, seed_), 0.0, 1.0);
  }

  // Knots inside the window plus the interpolated window endpoints.
  std::vector<std::pair<double, double>> knots_in_window() const {
    std::vector<std::pair<double, double>> out;
    long long k = segment_of(window_.lo);
    if (knot_x(k) < window_.lo) out.emplace_back(window_.lo, value_unchecked(window_.lo));
    for (; knot_x(k) <= window_.hi; ++k)
      if (knot_x(k) >= window_.lo) out.emplace_back(knot_x(k), knot_v(k));
    if (out.empty() || out.back().first < window_.hi) out.emplace_back(window_.hi, value_unchecked(window_.hi));
    return out;
  }

 private:
  double base_x(long long k) const {
    const auto& d = *data_;
    switch (d.kind) {
      case ProcessKind::PeriodicSingleWell:
      case ProcessKind::PeriodicMultiWell: {
        long long J = static_cast<long long>(d.z.size());
        long long n = k >= 0 ? k / J : -((-k + J - 1) / J);
        long long j = k - n * J;
        return static_cast<double>(n) * d.period + d.z[static_cast<std::size_t>(j)] - offset_ * d.period;
      }
      case ProcessKind::IidPiecewiseLinear:
      case ProcessKind::MarkovInterlaced:
        return static_cast<double>(k) - offset_;
      case ProcessKind::UserCallable:
        return static_cast<double>(k) * d.step;
    }
    return 0.0;
  }

  double base_v(long long k) const {
    const auto& d = *data_;
    switch (d.kind) {
      case ProcessKind::PeriodicSingleWell:
      case ProcessKind::PeriodicMultiWell: {
        long long J = static_cast<long long>(d.z.size());
        long long j = ((k % J) + J) % J;
        return d.v[static_cast<std::size_t>(j)];
      }
      case ProcessKind::IidPiecewiseLinear:
        return d.mu1.sample(numeric::to_unit(numeric::hash3(seed_, detail::kStreamValue, static_cast<std::uint64_t>(k))));
      case ProcessKind::MarkovInterlaced: {
        double u = numeric::to_unit(numeric::hash3(seed_, detail::kStreamValue, static_cast<std::uint64_t>(k)));
        return detail::mod2(k + coin_) == 0 ? d.mu1.sample(u) : d.mu2.sample(u);
      }
      case ProcessKind::UserCallable:
        return std::clamp(d.callable(base_x(k), seed_), 0.0, 1.0);
    }
    return 0.0;
  }

  long long base_segment(double x) const {
    const auto& d = *data_;
    switch (d.kind) {
      case ProcessKind::PeriodicSingleWell:
      case ProcessKind::PeriodicMultiWell: {
        double y = x + offset_ * d.period;
        long long n = detail::floor_ll(y / d.period);
        double r = y - static_cast<double>(n) * d.period;
        long long j = static_cast<long long>(std::upper_bound(d.z.begin(), d.z.end(), r) - d.z.begin()) - 1;
        j = std::max(0LL, j);
        return n * static_cast<long long>(d.z.size()) + j;
      }
      case ProcessKind::IidPiecewiseLinear:
      case ProcessKind::MarkovInterlaced:
        return detail::floor_ll(x + offset_);
      case ProcessKind::UserCallable:
        return detail::floor_ll(x / d.step);
    }
    return 0;
  }

  std::shared_ptr<const detail::ProcessData> data_;
  Window window_;
  std::uint64_t seed_ = 0;
  double offset_ = 0.0;
  int coin_ = 0;
  bool reflected_ = false;
};

struct AttainmentFlags {
  bool q0 = false;
  bool q1 = false;
  std::string method;
  std::size_t samples = 0;
  double tolerance = 0.0;
};

class PotentialProcess {
 public:
  // Periodic potential from knots (z, v0(z)) on [0, period); linear interpolation, wrapping at the period.
  static PotentialProcess periodic(std::vector<std::pair<double, double>> knots, double period = 1.0) {
    if (!(period > 0.0)) fail(ErrorKind::Config, "period must be positive");
    std::sort(knots.begin(), knots.end());
    if (knots.size() < 2) fail(ErrorKind::Config, "periodic potential needs at least two knots");
    if (knots.front().first != 0.0) fail(ErrorKind::Config, "periodic knots must start at z=0");
    if (knots.back().first >= period) fail(ErrorKind::Config, "periodic knots must lie in [0, period)");
    auto d = std::make_shared<detail::ProcessData>();
    double lo = 1.0, hi = 0.0;
    for (std::size_t i = 0; i < knots.size(); ++i) {
      if (i > 0 && knots[i].first == knots[i - 1].first) fail(ErrorKind::Config, "duplicate knot position");
      double v = knots[i].second;
      if (v < 0.0 || v > 1.0) fail(ErrorKind::Config, "potential values must lie in [0,1]");
      d->z.push_back(knots[i].first);
      d->v.push_back(v);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (lo != 0.0 || hi != 1.0) fail(ErrorKind::Config, "periodic potential must attain 0 and 1");
    d->period = period;
    d->kind = count_local_minima(d->v) <= 1 ? ProcessKind::PeriodicSingleWell : ProcessKind::PeriodicMultiWell;
    std::ostringstream os;
    os.precision(17);
    os << "periodic(P=" << period;
    for (std::size_t i = 0; i < d->z.size(); ++i) os << ";" << d->z[i] << ":" << d->v[i];
    os << ")";
    d->label = os.str();
    return PotentialProcess(std::move(d));
  }

  static PotentialProcess iid(Marginal mu) {
    mu.validate("mu");
    if (mu.support_min() != 0.0 || mu.support_max() != 1.0)
      fail(ErrorKind::Config, "iid marginal must have 0 and 1 in its support");
    auto d = std::make_shared<detail::ProcessData>();
    d->kind = ProcessKind::IidPiecewiseLinear;
    d->mu1 = std::move(mu);
    d->label = "iid" + d->mu1.describe();
    return PotentialProcess(std::move(d));
  }

  static PotentialProcess markov(Marginal mu1, Marginal mu2, double c) {
    mu1.validate("mu1");
    mu2.validate("mu2");
    if (!(0.0 < c && c < 1.0)) fail(ErrorKind::Config, "markov split c must lie in (0,1)");
    if (mu1.support_min() != 0.0 || !(mu1.support_max() < c))
      fail(ErrorKind::Config, "mu1 must satisfy 0 in supp and supp within [0,c)");
    if (mu2.support_max() != 1.0 || !(mu2.support_min() > c))
      fail(ErrorKind::Config, "mu2 must satisfy 1 in supp and supp within (c,1]");
    auto d = std::make_shared<detail::ProcessData>();
    d->kind = ProcessKind::MarkovInterlaced;
    d->mu1 = std::move(mu1);
    d->mu2 = std::move(mu2);
    d->c = c;
    d->label = "markov" + d->mu1.describe() + d->mu2.describe();
    return PotentialProcess(std::move(d));
  }

  // V(x, seed) in [0,1]; `step` bounds the scale on which V can cross a level and back.
  static PotentialProcess user_callable(std::function<double(double, std::uint64_t)> v, double step, std::string label) {
    if (!(step > 0.0)) fail(ErrorKind::Config, "callable potential needs a positive modulus step");
    auto d = std::make_shared<detail::ProcessData>();
    d->kind = ProcessKind::UserCallable;
    d->callable = std::move(v);
    d->step = step;
    d->label = "callable:" + label;
    return PotentialProcess(std::move(d));
  }

  ProcessKind kind() const { return data_->kind; }
  bool periodic() const {
    return data_->kind == ProcessKind::PeriodicSingleWell || data_->kind == ProcessKind::PeriodicMultiWell;
  }
  double period() const { return data_->period; }
  const std::string& id() const { return data_->label; }
  const std::vector<double>& knot_z() const { return data_->z; }
  const std::vector<double>& knot_v() const { return data_->v; }
  const Marginal& mu1() const { return data_->mu1; }
  const Marginal& mu2() const { return data_->mu2; }
  double split() const { return data_->c; }

  PathRealization sample_path(Window window, std::uint64_t seed) const {
    double w = numeric::to_unit(numeric::hash3(seed, detail::kStreamOffset, 0));
    int coin = static_cast<int>(numeric::hash3(seed, detail::kStreamCoin, 0) & 1ULL);
    if (data_->kind == ProcessKind::UserCallable) w = 0.0;
    return PathRealization(data_, window, seed, w, coin, false);
  }

  // Explicit offset w in [0,1) (fraction of a period / knot spacing).
  PathRealization path_with_offset(Window window, double w, std::uint64_t seed = 0, int coin = 0) const {
    if (!(w >= 0.0 && w < 1.0)) fail(ErrorKind::Config, "offset must lie in [0,1)");
    return PathRealization(data_, window, seed, w, coin, false);
  }

  AttainmentFlags attainment(std::size_t samples = 4000, std::uint64_t seed = 1, double tol = 1e-12) const {
    AttainmentFlags f;
    switch (data_->kind) {
      case ProcessKind::PeriodicSingleWell:
      case ProcessKind::PeriodicMultiWell:
        f.q0 = f.q1 = true;
        f.method = "periodic";
        return f;
      case ProcessKind::IidPiecewiseLinear:
        f.q0 = data_->mu1.has_atom(0.0);
        f.q1 = data_->mu1.has_atom(1.0);
        f.method = "atoms";
        return f;
      case ProcessKind::MarkovInterlaced:
        f.q0 = data_->mu1.has_atom(0.0);
        f.q1 = data_->mu2.has_atom(1.0);
        f.method = "atoms";
        return f;
      case ProcessKind::UserCallable: {
        f.method = "monte-carlo";
        f.samples = samples;
        f.tolerance = tol;
        int n = std::max(1, static_cast<int>(std::ceil(1.0 / data_->step)) * 8);
        for (std::size_t s = 0; s < samples && !(f.q0 && f.q1); ++s) {
          PathRealization p = sample_path({0.0, 1.0}, numeric::derive_seed(seed, s));
          for (int i = 0; i <= n; ++i) {
            double v = p.exact(static_cast<double>(i) / n);
            f.q0 = f.q0 || v <= tol;
            f.q1 = f.q1 || v >= 1.0 - tol;
          }
        }
        return f;
      }
    }
    return f;
  }

 private:
  explicit PotentialProcess(std::shared_ptr<const detail::ProcessData> d) : data_(std::move(d)) {}

  static int count_local_minima(const std::vector<double>& v) {
    // Cyclic sequence; plateaus count once.
    std::vector<double> w;
    for (double x : v)
      if (w.empty() || w.back() != x) w.push_back(x);
    while (w.size() > 1 && w.front() == w.back()) w.pop_back();
    int n = static_cast<int>(w.size()), count = 0;
    for (int i = 0; i < n; ++i) {
      double a = w[static_cast<std::size_t>((i + n - 1) % n)], b = w[static_cast<std::size_t>(i)],
             c = w[static_cast<std::size_t>((i + 1) % n)];
      if (b < a && b < c) ++count;
    }
    return count;
  }

  std::shared_ptr<const detail::ProcessData> data_;
};

// Mean of g(V) over one period (periodic paths) or over the realized window.
template <class F>
double spatial_average(const PathRealization& path, F&& g, double tol = 1e-12) {
  double a, b;
  if (path.periodic()) {
    a = path.knot_x(0);
    b = path.knot_x(path.knots_per_period());
    if (path.reflected()) std::swap(a, b);
    if (a > b) std::swap(a, b);
  } else {
    a = path.window().lo;
    b = path.window().hi;
  }
  double total = 0.0;
  if (!path.piecewise_linear()) {
    long long k = path.segment_of(a);
    double x = a;
    while (x < b) {
      double xe = std::min(b, path.knot_x(k + 1));
      total += numeric::integrate([&](double t) { return g(path.exact(t)); }, x, xe, tol);
      x = xe;
      ++k;
    }
    return total / (b - a);
  }
  long long k = path.segment_of(a);
  double x = a;
  double vx = path.value_unchecked(a);
  while (x < b) {
    double x1 = path.knot_x(k + 1), v1 = path.knot_v(k + 1);
    double xe = std::min(b, x1);
    double ve = xe == x1 ? v1 : vx + (v1 - vx) * (xe - x) / (x1 - x);
    if (vx == ve) {
      total += (xe - x) * g(vx);
    } else {
      double x0 = x, v0 = vx;
      total += numeric::integrate([&](double t) { return g(v0 + (ve - v0) * (t - x0) / (xe - x0)); }, x0, xe, tol);
    }
    x = xe;
    vx = ve;
    ++k;
  }
  return total / (b - a);
}

}  // namespace hbar
