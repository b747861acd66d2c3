#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "hbar/crossings.hpp"

using namespace hbar;

namespace {

Levels lv(double lambda, double beta, double m, double M) {
  Levels l;
  l.lambda = lambda;
  l.beta = beta;
  l.m = m;
  l.M = M;
  return l;
}

// Dense-scan oracle for a first-passage time of a predicate on g.
template <class P>
double scan_first(const PathRealization& p, double lambda, double beta, double from, P pred, double h = 1e-5) {
  for (double x = from;; x += h)
    if (pred(lambda - beta * p.value_unchecked(x))) return x;
}

}  // namespace

TEST(Crossings, TriangleLadderExample) {
  auto p = fixtures::tri().path_with_offset({-5, 5}, 0.0);
  auto L = build_ladder(p, lv(1.1, 1.0, 0.4, 0.6));
  EXPECT_NEAR(L.lower.x(0), 0.25, 1e-12);
  EXPECT_NEAR(L.lower.y(0), 0.85, 1e-12);
  EXPECT_NEAR(L.lower.x(1), 1.25, 1e-12);
  EXPECT_NEAR(L.lower.x(-1), -0.75, 1e-12);
  // no touching: strict and non-strict ladders agree
  EXPECT_NEAR(L.upper.x(0), 0.25, 1e-12);
  EXPECT_NEAR(L.upper.y(0), 0.85, 1e-12);
}

TEST(Crossings, LambdaOutsideLadderDomain) {
  auto p = fixtures::tri().path_with_offset({-5, 5}, 0.0);
  EXPECT_THROW(build_ladder(p, lv(1.5, 1.0, 0.4, 0.6)), Error);
  EXPECT_THROW(build_ladder(p, lv(0.9, 1.0, 0.4, 0.6)), Error);
  EXPECT_THROW(build_ladder(p, lv(0.5, 0.2, 0.0, 0.5)), Error);  // weak: no ladders
}

TEST(Crossings, ShortWindowReported) {
  auto p = fixtures::tri().path_with_offset({0.1, 0.9}, 0.0);
  try {
    build_ladder(p, lv(1.1, 1.0, 0.4, 0.6));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::WindowTooShort);
  }
}

TEST(CrossingsProperty, MatchesDenseScanOracle) {
  auto proc = fixtures::iid_uniform();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = proc.sample_path({-200, 200}, seed);
    const double lambda = 1.13, beta = 1.0, m = 0.4, M = 0.6;
    auto L = build_ladder(p, lv(lambda, beta, m, M));
    for (long long i = -2; i <= 2; ++i) {
      double y_prev = L.lower.y(i - 1);
      double x = scan_first(p, lambda, beta, y_prev, [&](double g) { return g >= M; });
      EXPECT_NEAR(L.lower.x(i), x, 2e-5);
      double y = scan_first(p, lambda, beta, L.lower.x(i), [&](double g) { return g < m; });
      EXPECT_NEAR(L.lower.y(i), y, 2e-5);
    }
    EXPECT_LE(L.lower.x(-1), 0.0);
    EXPECT_GT(L.lower.x(0), 0.0);
    EXPECT_LT(L.upper.x(-1), 0.0);
    EXPECT_GE(L.upper.x(0), 0.0);
  }
}

TEST(CrossingsProperty, InterleavingAndContainment) {
  for (auto proc : {fixtures::iid_three(), fixtures::markov(), fixtures::iid_uniform()}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto p = proc.sample_path({-300, 300}, seed);
      for (double lambda : {1.05, 1.1, 1.2, 1.3}) {
        auto L = build_ladder(p, lv(lambda, 1.0, 0.4, 0.6));
        for (const LadderSequence* s : {&L.lower, &L.upper})
          for (long long i = s->first; s->has_a(i + 1) && s->has_b(i); ++i) {
            EXPECT_LT(s->x(i), s->y(i));
            EXPECT_LT(s->y(i), s->x(i + 1));
          }
        // [xbar_i, ylow_i) lies inside some [xlow_j, ybar_j)
        for (long long i = L.upper.first + 1; L.upper.has_b(i) && i < L.upper.last_a() - 1; ++i) {
          double a = L.upper.x(i), b = L.upper.y(i);
          // partner ladder truncated on either side
          if (a < L.lower.x(L.lower.first + 1) || b > L.lower.y(L.lower.last_b())) continue;
          bool found = false;
          for (long long j = L.lower.first; L.lower.has_b(j); ++j)
            if (L.lower.x(j) <= a && b <= L.lower.y(j)) found = true;
          EXPECT_TRUE(found) << "seed " << seed << " lambda " << lambda << " i " << i;
        }
        // [ybar_i, xlow_{i+1}) lies inside some [ylow_k, xbar_{k+1})
        for (long long i = L.lower.first + 1; L.lower.has_a(i + 1) && i < L.lower.last_b() - 1; ++i) {
          double a = L.lower.y(i), b = L.lower.x(i + 1);
          if (a < L.upper.y(L.upper.first + 1) || b > L.upper.x(L.upper.last_a())) continue;
          bool found = false;
          for (long long k = L.upper.first; L.upper.has_a(k + 1) && L.upper.has_b(k); ++k)
            if (L.upper.y(k) <= a && b <= L.upper.x(k + 1)) found = true;
          EXPECT_TRUE(found) << "seed " << seed << " lambda " << lambda << " i " << i << " a " << a << " b " << b << " first " << L.lower.first << " ufirst " << L.upper.first;
        }
      }
    }
  }
}

TEST(Crossings, EventsOnTriangleAlwaysHold) {
  auto proc = fixtures::tri();
  for (int k = 0; k < 50; ++k) {
    auto p = proc.path_with_offset({-10, 10}, k / 50.0);
    auto e = detect_events(p, lv(1.1, 1.0, 0.4, 0.6));
    EXPECT_TRUE(e.in_U);
    EXPECT_TRUE(e.in_D);
  }
}

TEST(Crossings, EventFailsAtTouchingLocalMax) {
  // g = 1.1 - V touches M = 0.6 exactly where V has a local min of 0.5 sandwiched between two ones.
  auto proc = PotentialProcess::periodic({{0.0, 1.0}, {0.25, 0.5}, {0.5, 1.0}, {0.75, 0.0}});
  auto p = proc.path_with_offset({-10, 10}, 0.9);  // knot at 0.25 sits at x = 0.25 - 0.9 + 1 = 0.35
  auto L = build_ladder(p, lv(1.1, 1.0, 0.4, 0.6));
  EXPECT_NEAR(L.lower.x(0), 0.35, 1e-12);
  auto e = detect_events(p, lv(1.1, 1.0, 0.4, 0.6));
  EXPECT_FALSE(e.in_U);
  // a slightly higher level crosses transversally
  EXPECT_TRUE(detect_events(p, lv(1.12, 1.0, 0.4, 0.6)).in_U);
}

TEST(CrossingsProperty, EventEqualsNoLocalExtremum) {
  // local max of g at x_0 <=> g <= M just to the right; local min at y_0 <=> g >= m just to the right.
  auto proc = fixtures::iid_three();
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    auto p = proc.sample_path({-200, 200}, seed);
    Levels l = lv(1.1, 1.0, 0.4, 0.6);
    auto L = build_ladder(p, l);
    auto e = detect_events(p, l);
    LevelFunction f(p, l);
    double x0 = L.lower.x(0), y0 = L.upper.y(0);
    bool local_max = f.g_at(x0 + 1e-7) <= l.M + 1e-12;
    bool local_min = f.g_at(y0 + 1e-7) >= l.m - 1e-12;
    EXPECT_EQ(e.in_U, !local_max) << seed;
    EXPECT_EQ(e.in_D, !local_min) << seed;
  }
}

TEST(Crossings, PudTriangleIsOne) {
  auto r = estimate_pUD(fixtures::tri(), lv(1.1, 1.0, 0.4, 0.6), 500, 3);
  EXPECT_EQ(r.p_hat, 1.0);
  EXPECT_EQ(r.ci_hi, 1.0);
  EXPECT_EQ(r.discarded, 0u);
}

TEST(Crossings, PudIidBelowOneAtAtomHeight) {
  auto r = estimate_pUD(fixtures::iid_three(), lv(1.1, 1.0, 0.4, 0.6), 2000, 3);
  EXPECT_LT(r.ci_hi, 1.0);
  auto r2 = estimate_pUD(fixtures::iid_three(), lv(1.05, 1.0, 0.4, 0.6), 2000, 3);
  EXPECT_EQ(r2.p_hat, 1.0);
}
