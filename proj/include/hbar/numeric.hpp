#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <thread>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "hbar/error.hpp"

namespace hbar {

struct Tolerances {
  double inverse = 1e-12;
  double level = 1e-10;
  double lambda = 1e-9;
  double quad = 1e-12;
  double eq = 1e-9;
  double curve = 1e-6;
  double limit = 1e-9;
  double gap_floor = 1e-6;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Estimate {
  double value = 0.0;
  double std_err = 0.0;
};

namespace numeric {

// Root of a monotone f on [lo, hi] with f(lo), f(hi) bracketing target.
template <class F>
double solve_monotone(F&& f, double target, double lo, double hi, bool increasing, double xtol) {
  for (int it = 0; it < 400 && hi - lo > xtol; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    double v = f(mid);
    bool below = increasing ? (v < target) : (v > target);
    if (below)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Walk outward from `start` until f crosses target; returns the far end of the bracket.
template <class F>
double expand_bracket(F&& f, double target, double start, double direction, bool increasing) {
  double step = 1.0;
  double x = start;
  for (int it = 0; it < 200; ++it) {
    x = start + direction * step;
    double v = f(x);
    bool past = (direction > 0) == increasing ? (v >= target) : (v <= target);
    if (past) return x;
    step *= 2.0;
  }
  fail(ErrorKind::NonConvergence, "bracket expansion did not reach target");
}

template <class F>
double integrate(F&& f, double a, double b, double tol = 1e-12) {
  if (!(b > a)) return 0.0;
  using gk = boost::math::quadrature::gauss_kronrod<double, 15>;
  double err = 0.0;
  return gk::integrate(f, a, b, 12, tol, &err);
}

inline Estimate mean_stderr(std::span<const double> xs) {
  Estimate e;
  if (xs.empty()) return e;
  double s = 0.0;
  for (double x : xs) s += x;
  e.value = s / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - e.value) * (x - e.value);
    e.std_err = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return e;
}

struct Interval {
  double lo;
  double hi;
};

inline Interval wilson_interval(std::size_t successes, std::size_t n, double z = 1.959963984540054) {
  if (n == 0) return {0.0, 1.0};
  double nn = static_cast<double>(n);
  double p = static_cast<double>(successes) / nn;
  double z2 = z * z;
  double denom = 1.0 + z2 / nn;
  double centre = (p + z2 / (2.0 * nn)) / denom;
  double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

// Counter-based generator: value at (seed, stream, index) is a pure function of its inputs,
// so paths can be read at any index without storing them.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash3(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

inline double to_unit(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k) { return hash3(seed, 0x5eedULL, k); }

// Runs f(i) for i in [0, n); results must be written to per-index slots by the caller.
template <class F>
void parallel_for(std::size_t n, unsigned jobs, F&& f) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        f(i);
      } catch (...) {
        if (!failed.exchange(true)) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  unsigned k = std::min<unsigned>(jobs, static_cast<unsigned>(n));
  for (unsigned t = 0; t < k; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace numeric
}  // namespace hbar
