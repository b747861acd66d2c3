#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "hbar/flatset.hpp"

using namespace hbar;

namespace {

std::vector<double> lambdas(const std::vector<FlatHeight>& hs) {
  std::vector<double> v;
  for (const auto& h : hs) v.push_back(h.lambda);
  return v;
}

void expect_set(const std::vector<double>& got, const std::vector<double>& want, double tol = 1e-9) {
  ASSERT_EQ(got.size(), want.size()) << ::testing::PrintToString(got);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol);
}

Marginal atoms(std::vector<std::pair<double, double>> a) {
  Marginal mu;
  for (auto [v, p] : a) mu.atoms.push_back({v, p});
  return mu;
}

FlatOptions quick() {
  FlatOptions o;
  o.effective.realizations = 8;
  o.effective.window = 4000.0;
  o.effective.lambda_nodes = 16;
  o.events.samples = 600;
  o.uniform_levels = 6;
  return o;
}

}  // namespace

TEST(FlatSet, ExtremesByRegime) {
  expect_set(lambdas(flats_at_extremes(Regime::WeakI, 0.2, 0.0, 0.5, false, false)), {0.2, 0.5});
  expect_set(lambdas(flats_at_extremes(Regime::MediumII, 0.5, 0.4, 0.6, false, false)), {0.5});
  expect_set(lambdas(flats_at_extremes(Regime::MediumII, 0.5, 0.4, 0.6, true, true)), {0.5, 0.6, 0.9});
  expect_set(lambdas(flats_at_extremes(Regime::StrongIII, 1.0, 0.4, 0.6, false, true)), {1.0, 1.4});
  expect_set(lambdas(flats_at_extremes(Regime::StrongIII, 1.0, 0.4, 0.6, true, false)), {1.0});
  expect_set(lambdas(flats_at_extremes(Regime::StrongEasyIII, 1.0, 0.0, 0.5, true, true)), {1.0});
  expect_set(lambdas(flats_at_extremes(Regime::MediumEasyII, 0.4, 0.1, 0.5, true, true)), {0.4, 0.5});
  auto weak = flats_at_extremes(Regime::WeakI, 0.2, 0.0, 0.5, false, false);
  EXPECT_EQ(weak[0].evidence.front().kind, EvidenceKind::AlwaysBeta);
  EXPECT_EQ(weak[0].evidence.size(), 2u);  // beta and m+beta coincide
}

TEST(FlatSet, ClosedFormArithmetic) {
  EXPECT_TRUE(iid_closed_form(atoms({{0.0, 0.5}, {1.0, 0.5}}), 0.4, 0.6, 1.0).heights.empty());
  expect_set(iid_closed_form(atoms({{0.0, 0.3}, {0.5, 0.3}, {1.0, 0.4}}), 0.4, 0.6, 1.0).heights, {1.1});
  auto mk = fixtures::markov();
  expect_set(markov_closed_form(mk.mu1(), mk.mu2(), 0.5, 0.4, 0.6, 1.0).heights, {1.2});
  EXPECT_THROW(markov_closed_form(atoms({{0.0, 0.5}, {0.6, 0.5}}), mk.mu2(), 0.5, 0.4, 0.6, 1.0), Error);
  try {
    markov_closed_form(atoms({{0.0, 0.5}, {0.6, 0.5}}), mk.mu2(), 0.5, 0.4, 0.6, 1.0);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Structure);
  }
}

TEST(FlatSet, DoubleWellTable) {
  auto g = fixtures::fix_g(0.4, 0.6);
  EXPECT_TRUE(closed_form_flats(fixtures::w_shape(0.6), g, 1.0).heights.empty());
  expect_set(closed_form_flats(fixtures::w_shape(0.7), g, 1.0).heights, {1.1});
  EXPECT_TRUE(closed_form_flats(fixtures::tri(), g, 1.0).heights.empty());
  // Table rows exercised directly: (l1, l2, l3) with bot=1, top=1.4.
  expect_set(double_well_table(1.2, 1.3, 0.6, 1.0, 1.4).heights, {1.2, 1.3});
  expect_set(double_well_table(0.6, 1.3, 1.2, 1.0, 1.4).heights, {1.2, 1.3});
  expect_set(double_well_table(1.3, 1.2, 0.6, 1.0, 1.4).heights, {1.3});
  expect_set(double_well_table(1.2, 1.4, 0.6, 1.0, 1.4).heights, {1.2});
  expect_set(double_well_table(0.6, 1.2, 1.3, 1.0, 1.4).heights, {1.2});
  expect_set(double_well_table(0.6, 1.4, 1.2, 1.0, 1.4).heights, {1.2});
  EXPECT_TRUE(double_well_table(0.6, 1.0, 0.8, 1.0, 1.4).heights.empty());
}

TEST(FlatSet, DoubleWellStructureErrors) {
  auto g = fixtures::fix_g(0.4, 0.6);
  // Maximum not at z=0.
  auto shifted = PotentialProcess::periodic({{0.0, 0.0}, {0.25, 0.6}, {0.5, 0.2}, {0.75, 1.0}});
  try {
    closed_form_flats(shifted, g, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Structure);
  }
  auto triple = PotentialProcess::periodic({{0.0, 1.0}, {0.1, 0.0}, {0.2, 0.5}, {0.3, 0.1}, {0.4, 0.6}, {0.5, 0.3}});
  EXPECT_THROW(closed_form_flats(triple, g, 1.0), Error);
}

TEST(FlatSet, ClosedFormMatchesGapModeOnPeriodicProfiles) {
  auto g = fixtures::fix_g(0.4, 0.6);
  std::vector<PotentialProcess> profiles = {
      fixtures::w_shape(0.6), fixtures::w_shape(0.7),
      PotentialProcess::periodic({{0.0, 1.0}, {0.25, 0.3}, {0.5, 0.9}, {0.75, 0.0}}),
      PotentialProcess::periodic({{0.0, 1.0}, {0.25, 0.0}, {0.5, 0.9}, {0.75, 0.6}}),
      PotentialProcess::periodic({{0.0, 1.0}, {0.3, 0.6}, {0.5, 0.9}, {0.8, 0.0}}),
      PotentialProcess::periodic({{0.0, 1.0}, {0.2, 0.5}, {0.6, 0.7}, {0.7, 0.0}})};
  for (const auto& v : profiles) {
    EffectiveModel model(g, v, 1.0);
    auto numeric = lambdas(flats_interior(model, default_lambda_grid(model, 24), InteriorMode::Gap));
    expect_set(numeric, closed_form_flats(v, g, 1.0).heights);
  }
}

TEST(FlatSet, TriangleHasNoInteriorFlat) {
  EffectiveModel model(fixtures::fix_g(0.4, 0.6), fixtures::tri(), 1.0);
  EventOptions ev;
  ev.samples = 300;
  EXPECT_TRUE(flats_interior(model, default_lambda_grid(model, 12), InteriorMode::Both, ev).empty());
}

TEST(FlatSet, WShapeEventModeAgrees) {
  EffectiveModel model(fixtures::fix_g(0.4, 0.6), fixtures::w_shape(0.7), 1.0);
  EventOptions ev;
  ev.samples = 400;
  auto found = flats_interior(model, {1.05, 1.1, 1.2}, InteriorMode::Both, ev);
  ASSERT_EQ(found.size(), 1u);
  EXPECT_DOUBLE_EQ(found[0].lambda, 1.1);
  EXPECT_EQ(found[0].evidence.size(), 2u);
  EXPECT_LT(found[0].evidence[1].hi, 1.0);
}

TEST(FlatSet, InteriorRequiresStretch) {
  EffectiveModel weak(fixtures::fix_g(0.0, 0.5), fixtures::tri(), 0.2);
  EXPECT_THROW(flats_interior(weak, {0.3}, InteriorMode::Gap), Error);
  EffectiveModel strong(fixtures::fix_g(0.4, 0.6), fixtures::tri(), 1.0);
  EXPECT_THROW(flats_interior(strong, {1.4}, InteriorMode::Gap), Error);
}

TEST(FlatSet, ReportWeak) {
  FlatPieceReport r = flat_report(fixtures::fix_g(0.0, 0.5), fixtures::tri(), 0.2);
  expect_set(r.heights, {0.2, 0.5});
  const FlatHeight* h = r.find(0.2);
  ASSERT_NE(h, nullptr);
  ASSERT_EQ(h->theta_intervals.size(), 2u);
  EXPECT_NEAR(h->theta_intervals[0].first, -2.1, 1e-9);
  EXPECT_NEAR(h->theta_intervals[0].second, -1.8, 1e-9);
  EXPECT_NEAR(h->theta_intervals[1].first, -0.2, 1e-9);
  EXPECT_NEAR(h->theta_intervals[1].second, 0.1, 1e-9);
}

TEST(FlatSet, ReportStrongTriangle) {
  FlatPieceReport r = flat_report(fixtures::fix_g(0.4, 0.6), fixtures::tri(), 1.0);
  expect_set(r.heights, {1.0, 1.4});
  for (const auto& e : r.entries)
    for (const auto& [a, b] : e.theta_intervals) EXPECT_GT(b, a);
}

TEST(FlatSet, ReportMediumHasAllThreeExtremes) {
  FlatPieceReport r = flat_report(fixtures::fix_g(0.4, 0.6), fixtures::tri(), 0.5);
  EXPECT_EQ(r.regime, Regime::MediumII);
  expect_set(r.heights, {0.5, 0.6, 0.9});
}

TEST(FlatSet, ReportIidAndMarkov) {
  FlatPieceReport iid = flat_report(fixtures::fix_g(0.4, 0.6), fixtures::iid_three(), 1.0, quick());
  expect_set(iid.heights, {1.0, 1.1, 1.4});
  const FlatHeight* h = iid.find(1.1);
  ASSERT_NE(h, nullptr);
  std::set<EvidenceKind> kinds;
  for (const auto& e : h->evidence) kinds.insert(e.kind);
  EXPECT_EQ(kinds, (std::set<EvidenceKind>{EvidenceKind::InteriorGap, EvidenceKind::InteriorEvent,
                                           EvidenceKind::ClosedForm}));
  FlatPieceReport mk = flat_report(fixtures::fix_g(0.4, 0.6), fixtures::markov(), 1.0, quick());
  expect_set(mk.heights, {1.0, 1.2, 1.4});
}

TEST(FlatSet, ReportHeightsRespectRegimeBounds) {
  for (double beta : {0.2, 0.5, 1.0}) {
    auto g = fixtures::fix_g(0.4, 0.6);
    FlatPieceReport r = flat_report(g, fixtures::w_shape(0.7), beta);
    const double bot = std::max(beta, 0.6), top = 0.4 + beta;
    EXPECT_NE(r.find(beta), nullptr);
    for (double h : r.heights) {
      if (bot >= top)
        EXPECT_TRUE(std::abs(h - beta) < 1e-9 || std::abs(h - top) < 1e-9 || std::abs(h - 0.6) < 1e-9) << h;
      else
        EXPECT_TRUE(std::abs(h - beta) < 1e-9 || (h >= bot - 1e-9 && h <= top + 1e-9)) << h;
    }
  }
}

TEST(FlatSet, OverrideTriggersInconsistentEvidence) {
  FlatOptions o;
  o.closed_form_override = std::vector<double>{1.2};
  try {
    flat_report(fixtures::fix_g(0.4, 0.6), fixtures::w_shape(0.7), 1.0, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InconsistentEvidence);
  }
}

TEST(FlatSet, RealizeTargetSet) {
  // Place atoms so that M + beta a1 and m + beta a2 hit prescribed heights inside (1, 1.4).
  const double m = 0.4, M = 0.6, beta = 1.0;
  for (std::vector<double> S : {std::vector<double>{1.1, 1.25}, std::vector<double>{1.05, 1.3, 1.35}}) {
    Marginal mu1 = atoms({{0.0, 0.5}, {S[0] - M, 0.5}});
    Marginal mu2;
    std::vector<std::pair<double, double>> a2 = {{1.0, 1.0 / S.size()}};
    for (std::size_t i = 1; i < S.size(); ++i) a2.push_back({(S[i] - m) / beta, 1.0 / S.size()});
    mu2 = atoms(a2);
    auto v = PotentialProcess::markov(mu1, mu2, 0.55);
    expect_set(closed_form_flats(v, fixtures::fix_g(m, M), beta).heights, S);
    FlatOptions o = quick();
    o.event_policy = EventPolicy::Never;
    EffectiveModel model(fixtures::fix_g(m, M), v, beta, o.effective);
    expect_set(lambdas(flats_interior(model, default_lambda_grid(model, 4), InteriorMode::Gap)), S);
  }
}

TEST(FlatSet, ProbabilityPerturbationKeepsSet) {
  auto g = fixtures::fix_g(0.4, 0.6);
  FlatOptions o = quick();
  o.event_policy = EventPolicy::Never;
  for (double p : {0.2, 0.5, 0.7}) {
    Marginal mu = atoms({{0.0, p}, {0.5, (1.0 - p) / 2}, {1.0, (1.0 - p) / 2}});
    FlatPieceReport r = flat_report(g, PotentialProcess::iid(mu), 1.0, o);
    expect_set(r.heights, {1.0, 1.1, 1.4});
  }
}
