#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "hbar/hamiltonian.hpp"

using namespace hbar;

TEST(Hamiltonian, FixtureValuesAtCriticalPoints) {
  auto g = fixtures::fix_g(0.4, 0.6);
  EXPECT_DOUBLE_EQ(g(-2.0), 0.4);
  EXPECT_DOUBLE_EQ(g(-1.0), 0.6);
  EXPECT_DOUBLE_EQ(g(0.0), 0.0);
  EXPECT_DOUBLE_EQ(g(-3.0), 1.4);
  EXPECT_DOUBLE_EQ(g(-1.5), 0.5);
  EXPECT_DOUBLE_EQ(g(-0.5), 0.3);
  EXPECT_DOUBLE_EQ(g(2.0), 2.0);
}

TEST(Hamiltonian, FixtureInverses) {
  auto g = fixtures::fix_g(0.4, 0.6);
  EXPECT_NEAR(g.branch_inverse(3, 0.3), -0.5, 1e-15);
  EXPECT_NEAR(g.branch_inverse(1, 1.4), -3.0, 1e-15);
  EXPECT_NEAR(g.branch_inverse(2, 0.5), -1.5, 1e-15);
  EXPECT_NEAR(g.branch_inverse(4, 0.7), 0.7, 1e-15);
}

TEST(Hamiltonian, InverseOutsideRangeThrows) {
  auto g = fixtures::fix_g(0.4, 0.6);
  try {
    g.branch_inverse(2, 0.7);
    FAIL() << "expected OutOfRange";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OutOfRange);
  }
  EXPECT_THROW(g.branch_inverse(3, -0.1), Error);
  EXPECT_THROW(g.branch_inverse(1, 0.3), Error);
}

TEST(Hamiltonian, InvalidShapesRejected) {
  EXPECT_THROW(DoubleWellSpec::piecewise_linear(0.6, 0.4), Error);
  EXPECT_THROW(DoubleWellSpec::piecewise_linear(-0.1, 0.4), Error);
  EXPECT_THROW(DoubleWellSpec::piecewise_linear(0.1, 0.4, -1.0, -2.0), Error);
  // quartic with p_m=-3, p_M=-1 has G(p_m) < 0
  EXPECT_THROW(DoubleWellSpec::quartic(-3.0, -1.0, 1.0), Error);
}

namespace {

std::vector<DoubleWellSpec> families() {
  return {fixtures::fix_g(0.4, 0.6), fixtures::fix_g(0.0, 0.5),
          DoubleWellSpec::quartic(-2.0, -1.2, 1.0),
          DoubleWellSpec::tabulated({{-3.0, 2.0}, {-2.0, 0.3}, {-1.0, 0.9}, {0.0, 0.0}, {1.0, 1.5}})};
}

}  // namespace

TEST(HamiltonianProperty, InverseRoundTripAllFamilies) {
  std::mt19937_64 rng(7);
  for (const auto& g : families()) {
    for (int i = 1; i <= 4; ++i) {
      const Branch& b = g.branch(i);
      double lo = b.range_lo, hi = std::isinf(b.range_hi) ? b.range_lo + 5.0 : b.range_hi;
      std::uniform_real_distribution<double> u(lo, hi);
      for (int k = 0; k < 200; ++k) {
        double v = u(rng);
        double p = g.branch_inverse(i, v);
        EXPECT_GE(p, b.lo);
        EXPECT_LE(p, b.hi);
        EXPECT_NEAR(g.branch_value(i, p), v, 1e-10) << g.id() << " branch " << i;
      }
    }
  }
}

TEST(HamiltonianProperty, BranchMonotonicity) {
  for (const auto& g : families()) {
    for (int i = 1; i <= 4; ++i) {
      const Branch& b = g.branch(i);
      double lo = std::isinf(b.lo) ? b.hi - 3.0 : b.lo;
      double hi = std::isinf(b.hi) ? b.lo + 3.0 : b.hi;
      double prev = g.branch_value(i, lo);
      for (int k = 1; k <= 100; ++k) {
        double cur = g.branch_value(i, lo + (hi - lo) * k / 100.0);
        if (b.increasing)
          EXPECT_GT(cur, prev);
        else
          EXPECT_LT(cur, prev);
        prev = cur;
      }
    }
  }
}

TEST(HamiltonianProperty, ExactExtremaMatchDenseSampling) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3.5, 1.5);
  for (const auto& g : families()) {
    for (int k = 0; k < 100; ++k) {
      double a = u(rng), b = u(rng);
      if (a > b) std::swap(a, b);
      double s = -kInf, i = kInf;
      for (int j = 0; j <= 20000; ++j) {
        double v = g.canonical_value(a + (b - a) * j / 20000.0);
        s = std::max(s, v);
        i = std::min(i, v);
      }
      EXPECT_GE(g.sup_on(a, b), s - 1e-12);
      EXPECT_LE(g.sup_on(a, b), s + 1e-3);
      EXPECT_LE(g.inf_on(a, b), i + 1e-12);
      EXPECT_GE(g.inf_on(a, b), i - 1e-3);
    }
  }
}

TEST(Hamiltonian, QuarticCriticalValues) {
  auto g = DoubleWellSpec::quartic(-2.0, -1.2, 1.0);
  // m = c p_m^3 (2 p_M - p_m) / 12
  EXPECT_NEAR(g.m(), -8.0 * (-2.4 + 2.0) / 12.0, 1e-14);
  EXPECT_GT(g.M(), g.m());
  EXPECT_NEAR(g(0.0), 0.0, 1e-15);
}

TEST(Hamiltonian, MirrorIsInvolution) {
  auto g = fixtures::fix_g(0.4, 0.6);
  auto gp = g.mirror();
  EXPECT_TRUE(gp.reflected());
  EXPECT_EQ(gp.mirror().id(), g.id());
  for (double p : {-3.0, -1.5, -0.2, 0.0, 0.7, 2.5}) EXPECT_DOUBLE_EQ(gp(p), g(-p));
}

TEST(Hamiltonian, LipschitzBoundDominatesDifferenceQuotients) {
  for (const auto& g : families()) {
    double L = g.lipschitz_bound(4.0);
    for (int k = 0; k < 4000; ++k) {
      double a = -4.0 + 8.0 * k / 4000.0, h = 1e-4;
      EXPECT_LE(std::abs(g.canonical_value(a + h) - g.canonical_value(a)) / h, L * (1.0 + 1e-9));
    }
  }
}

TEST(Regime, ClassificationOfFixtures) {
  EXPECT_EQ(classify_regime(0.0, 0.5, 0.2), Regime::WeakI);
  EXPECT_EQ(classify_regime(0.4, 0.6, 0.2), Regime::MediumEasyII);
  EXPECT_EQ(classify_regime(0.4, 0.6, 0.5), Regime::MediumII);
  EXPECT_EQ(classify_regime(0.0, 0.5, 1.0), Regime::StrongEasyIII);
  EXPECT_EQ(classify_regime(0.4, 0.6, 1.0), Regime::StrongIII);
  EXPECT_EQ(classify_regime(0.4, 0.6, 0.6), Regime::StrongIII);
}

TEST(RegimeProperty, ExactlyOneRegimeOnRandomParameters) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 2000; ++k) {
    double m = u(rng) * 0.5, M = m + 0.01 + u(rng), beta = 0.01 + 2.0 * u(rng);
    Regime r = classify_regime(m, M, beta);
    switch (r) {
      case Regime::WeakI: EXPECT_LT(m + beta, M); break;
      case Regime::MediumEasyII: EXPECT_NEAR(m + beta, M, 1e-9); break;
      case Regime::MediumII: EXPECT_TRUE(beta < M && M < m + beta); break;
      case Regime::StrongEasyIII: EXPECT_LE(m, 1e-9); break;
      case Regime::StrongIII: EXPECT_TRUE(M <= beta + 1e-9 && beta < m + beta); break;
    }
  }
}
