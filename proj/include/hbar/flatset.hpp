#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hbar/crossings.hpp"
#include "hbar/effective.hpp"
#include "hbar/error.hpp"
#include "hbar/hamiltonian.hpp"
#include "hbar/potential.hpp"

namespace hbar {

enum class EvidenceKind { AlwaysBeta, Attainment, InteriorGap, InteriorEvent, ClosedForm };

inline const char* to_string(EvidenceKind k) {
  switch (k) {
    case EvidenceKind::AlwaysBeta: return "AlwaysBeta";
    case EvidenceKind::Attainment: return "Attainment";
    case EvidenceKind::InteriorGap: return "InteriorGap";
    case EvidenceKind::InteriorEvent: return "InteriorEvent";
    case EvidenceKind::ClosedForm: return "ClosedForm";
  }
  return "?";
}

struct FlatEvidence {
  EvidenceKind kind = EvidenceKind::AlwaysBeta;
  std::string tag;  // "q0"/"q1" for attainment, formula id for closed forms
  // InteriorGap: [lower, upper] theta13; InteriorEvent: Wilson interval.
  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = std::numeric_limits<double>::quiet_NaN();
  double value = std::numeric_limits<double>::quiet_NaN();  // gap or p_hat
  double std_err = 0.0;
};

struct FlatHeight {
  double lambda = 0.0;
  std::vector<FlatEvidence> evidence;
  std::vector<std::pair<double, double>> theta_intervals;
};

struct FlatPieceReport {
  Regime regime = Regime::WeakI;
  double beta = 0.0;
  std::vector<double> heights;
  std::vector<FlatHeight> entries;  // parallel to heights

  const FlatHeight* find(double lambda, double tol = 1e-9) const {
    for (const FlatHeight& h : entries)
      if (std::abs(h.lambda - lambda) <= tol) return &h;
    return nullptr;
  }
};

namespace detail {

inline void add_height(std::vector<FlatHeight>& out, double lambda, FlatEvidence ev, double tol = 1e-9) {
  for (FlatHeight& h : out) {
    if (std::abs(h.lambda - lambda) <= tol) {
      h.evidence.push_back(std::move(ev));
      return;
    }
  }
  out.push_back({lambda, {std::move(ev)}, {}});
}

inline std::vector<double> heights_of(const std::vector<FlatHeight>& hs) {
  std::vector<double> v;
  for (const FlatHeight& h : hs) v.push_back(h.lambda);
  std::sort(v.begin(), v.end());
  return v;
}

inline bool same_set(std::vector<double> a, std::vector<double> b, double tol) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > tol) return false;
  return true;
}

inline std::string set_string(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(12);
  os << "{";
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << "}";
  return os.str();
}

}  // namespace detail

// Flats at beta, M and m+beta from the regime and the attainment flags.
inline std::vector<FlatHeight> flats_at_extremes(Regime regime, double beta, double m, double M, bool q0_pos,
                                                 bool q1_pos) {
  std::vector<FlatHeight> out;
  detail::add_height(out, beta, {EvidenceKind::AlwaysBeta, "beta"});
  switch (regime) {
    case Regime::WeakI:
      detail::add_height(out, m + beta, {EvidenceKind::ClosedForm, "weak-regime"});
      detail::add_height(out, M, {EvidenceKind::ClosedForm, "weak-regime"});
      break;
    case Regime::MediumEasyII:
      detail::add_height(out, M, {EvidenceKind::ClosedForm, "medium-easy"});
      break;
    case Regime::MediumII:
      if (q0_pos) detail::add_height(out, M, {EvidenceKind::Attainment, "q0"});
      if (q1_pos) detail::add_height(out, m + beta, {EvidenceKind::Attainment, "q1"});
      break;
    case Regime::StrongEasyIII:
      break;
    case Regime::StrongIII:
      if (q1_pos) detail::add_height(out, m + beta, {EvidenceKind::Attainment, "q1"});
      break;
  }
  std::sort(out.begin(), out.end(), [](const FlatHeight& a, const FlatHeight& b) { return a.lambda < b.lambda; });
  return out;
}

inline std::vector<FlatHeight> flats_at_extremes(const DoubleWellSpec& g, double beta, bool q0_pos, bool q1_pos,
                                                 double eq_tol = 1e-9) {
  return flats_at_extremes(classify_regime(g, beta, eq_tol), beta, g.m(), g.M(), q0_pos, q1_pos);
}

enum class InteriorMode { Gap, Event, Both };

struct EventOptions {
  std::size_t samples = 2000;
  double window = 400.0;
  std::uint64_t seed = 7;
  unsigned jobs = 1;
};

// Candidate heights plus `uniform` evenly spaced levels strictly inside (max{beta,M}, m+beta).
inline std::vector<double> default_lambda_grid(const EffectiveModel& model, int uniform = 16) {
  std::vector<double> grid = model.candidate_heights();
  if (!model.has_ladder_stretch()) return grid;
  const double lo = model.bottom(), hi = model.top();
  for (int k = 1; k <= uniform; ++k) grid.push_back(lo + (hi - lo) * k / (uniform + 1.0));
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
             grid.end());
  return grid;
}

// Levels in the grid carrying an interior flat. With Both, the two criteria must agree at every level.
inline std::vector<FlatHeight> flats_interior(const EffectiveModel& model, const std::vector<double>& lambda_grid,
                                              InteriorMode mode, const EventOptions& ev = {}) {
  if (!model.has_ladder_stretch())
    fail(ErrorKind::Regime, "interior flats need max{beta,M} < m+beta");
  std::vector<FlatHeight> out;
  for (double lam : lambda_grid) {
    if (!(lam > model.bottom() && lam < model.top()))
      fail(ErrorKind::Regime, "grid level outside (max{beta,M}, m+beta)");
    std::optional<bool> by_gap, by_event;
    FlatHeight h{lam, {}, {}};
    if (mode != InteriorMode::Event) {
      Theta13Pair p = model.theta13_pair(lam);
      by_gap = p.gap.value > model.gap_tol(p.gap);
      if (*by_gap) {
        h.evidence.push_back(
            {EvidenceKind::InteriorGap, "gap", p.lower.value, p.upper.value, p.gap.value, p.gap.std_err});
        h.theta_intervals.emplace_back(p.lower.value, p.upper.value);
      }
    }
    if (mode != InteriorMode::Gap) {
      PudEstimate e = estimate_pUD(model.process(), levels_for(model.hamiltonian(), model.beta(), lam), ev.samples,
                                   ev.seed, ev.window, ev.jobs);
      if (e.used == 0) fail(ErrorKind::WindowTooShort, "no usable event samples");
      by_event = e.successes < e.used && e.ci_hi < 1.0;
      if (*by_event) h.evidence.push_back({EvidenceKind::InteriorEvent, "pUD", e.ci_lo, e.ci_hi, e.p_hat, 0.0});
    }
    if (by_gap && by_event && *by_gap != *by_event) {
      std::ostringstream os;
      os << "gap and event criteria disagree at lambda=" << lam;
      fail(ErrorKind::InconsistentEvidence, os.str());
    }
    if (!h.evidence.empty()) out.push_back(std::move(h));
  }
  return out;
}

inline std::vector<FlatHeight> flats_interior(const DoubleWellSpec& g, const PotentialProcess& v, double beta,
                                              const std::vector<double>& lambda_grid, InteriorMode mode,
                                              const EffectiveOptions& opt = {}, const EventOptions& ev = {}) {
  EffectiveModel model(g, v, beta, opt);
  return flats_interior(model, lambda_grid, mode, ev);
}

// ---- closed forms for the example classes ----

struct ClosedFormFlats {
  std::string formula;
  std::vector<double> heights;
};

namespace detail {

inline std::vector<double> open_window(std::vector<double> c, double lo, double hi, double tol) {
  std::vector<double> out;
  for (double x : c)
    if (x > lo + tol && x < hi - tol) out.push_back(x);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end(), [&](double a, double b) { return std::abs(a - b) <= tol; }),
            out.end());
  return out;
}

}  // namespace detail

inline ClosedFormFlats iid_closed_form(const Marginal& mu, double m, double M, double beta, double tol = 1e-9) {
  std::vector<double> c;
  for (double a : mu.atom_values()) {
    c.push_back(M + beta * a);
    c.push_back(m + beta * a);
  }
  return {"iid", detail::open_window(c, std::max(beta, M), m + beta, tol)};
}

inline ClosedFormFlats markov_closed_form(const Marginal& mu1, const Marginal& mu2, double c, double m, double M,
                                          double beta, double tol = 1e-9) {
  if (!(mu1.support_max() < c)) fail(ErrorKind::Structure, "supp(mu1) must lie in [0,c)");
  if (!(mu2.support_min() > c)) fail(ErrorKind::Structure, "supp(mu2) must lie in (c,1]");
  std::vector<double> cand;
  for (double a : mu1.atom_values()) cand.push_back(M + beta * a);
  for (double a : mu2.atom_values()) cand.push_back(m + beta * a);
  return {"markov", detail::open_window(cand, std::max(beta, M), m + beta, tol)};
}

// Case table for a periodic profile falling from its maximum at z=0 to z1, rising to z2, falling to z3, rising back.
inline ClosedFormFlats double_well_table(double l1, double l2, double l3, double bot, double top, double tol = 1e-9) {
  auto eq = [&](double a, double b) { return std::abs(a - b) <= tol; };
  auto lt = [&](double a, double b) { return a < b - tol; };
  auto le = [&](double a, double b) { return a <= b + tol; };
  const double M = std::min(l1, l3);
  ClosedFormFlats r{"periodic-double-well", {}};
  const bool l3M = eq(l3, M), l1M = eq(l1, M);
  if (l3M && lt(bot, l1) && lt(l1, l2) && lt(l2, top))
    r.heights = {l1, l2};
  else if (l1M && lt(bot, l3) && lt(l3, l2) && lt(l2, top))
    r.heights = {l3, l2};
  else if (l3M && lt(bot, l1) && le(l2, l1) && lt(l1, top))
    r.heights = {l1};
  else if (l3M && lt(bot, l1) && lt(l1, top) && eq(top, l2))
    r.heights = {l1};
  else if (l1M && lt(bot, l2) && le(l2, l3) && lt(l2, top))
    r.heights = {l2};
  else if (le(std::max(l1, l3), bot) && lt(bot, l2) && lt(l2, top))
    r.heights = {l2};
  else if (l1M && lt(bot, l3) && lt(l3, top) && eq(top, l2))
    r.heights = {l3};
  std::sort(r.heights.begin(), r.heights.end());
  return r;
}

// Knot values of one period at the turning points z1, z2, z3.
inline std::array<double, 3> double_well_turns(const PotentialProcess& v) {
  const auto& k = v.knot_v();
  const std::size_t n = k.size();
  std::vector<int> dir;
  for (std::size_t i = 0; i < n; ++i) {
    double d = k[(i + 1) % n] - k[i];
    if (d == 0.0) fail(ErrorKind::Structure, "double-well closed form needs a profile without plateaus");
    dir.push_back(d > 0 ? 1 : -1);
  }
  if (dir.front() != -1 || dir.back() != 1) fail(ErrorKind::Structure, "z=0 must be a strict local maximum");
  std::vector<double> turns;
  for (std::size_t i = 1; i < n; ++i)
    if (dir[i] != dir[i - 1]) turns.push_back(k[i]);
  if (turns.size() != 3) fail(ErrorKind::Structure, "profile must have exactly four monotone pieces");
  return {turns[0], turns[1], turns[2]};
}

inline ClosedFormFlats closed_form_flats(const PotentialProcess& v, const DoubleWellSpec& g, double beta,
                                         double tol = 1e-9) {
  const double m = g.m(), M = g.M();
  const double bot = std::max(beta, M), top = m + beta;
  switch (v.kind()) {
    case ProcessKind::PeriodicSingleWell:
      return {"periodic-single-well", {}};
    case ProcessKind::PeriodicMultiWell: {
      auto z = double_well_turns(v);
      return double_well_table(M + beta * z[0], m + beta * z[1], M + beta * z[2], bot, top, tol);
    }
    case ProcessKind::IidPiecewiseLinear:
      return iid_closed_form(v.mu1(), m, M, beta, tol);
    case ProcessKind::MarkovInterlaced:
      return markov_closed_form(v.mu1(), v.mu2(), v.split(), m, M, beta, tol);
    case ProcessKind::UserCallable:
      break;
  }
  fail(ErrorKind::Structure, "no closed form for a user-supplied potential");
}

inline bool has_closed_form(const PotentialProcess& v) { return v.kind() != ProcessKind::UserCallable; }

// ---- merged report ----

enum class EventPolicy { RandomOnly, Always, Never };

struct FlatOptions {
  EffectiveOptions effective;
  EventOptions events;
  EventPolicy event_policy = EventPolicy::RandomOnly;
  int uniform_levels = 16;
  // Replaces the closed-form set; used to check that disagreement is reported.
  std::optional<std::vector<double>> closed_form_override;
};

inline FlatPieceReport flat_report(const EffectiveModel& model, const FlatOptions& opt = {}) {
  const double tol = 1e-9;
  FlatPieceReport rep;
  rep.regime = model.regime();
  rep.beta = model.beta();
  AttainmentFlags q = model.process().attainment();
  std::vector<FlatHeight> hs =
      flats_at_extremes(model.regime(), model.beta(), model.m(), model.M(), q.q0, q.q1);

  // Endpoint flats read off the assembled pieces must match the attainment prediction.
  bool seg_M = false, seg_MB = false;
  for (const CurveSegment& s : model.segments()) {
    if (!is_flat(s.label) || s.label == PieceLabel::FlatInterior) continue;
    if (s.label == PieceLabel::FlatM) seg_M = true;
    if (s.label == PieceLabel::FlatMB) seg_MB = true;
  }
  if (model.regime() == Regime::MediumII || model.regime() == Regime::StrongIII) {
    bool pred_M = model.regime() == Regime::MediumII && q.q0;
    if (seg_M != pred_M || seg_MB != q.q1) {
      std::ostringstream os;
      os << "endpoint flats from the curve (M:" << seg_M << ", m+beta:" << seg_MB << ") contradict attainment (q0:"
         << q.q0 << ", q1:" << q.q1 << ")";
      fail(ErrorKind::InconsistentEvidence, os.str());
    }
  }

  std::vector<double> interior;
  if (model.has_ladder_stretch()) {
    bool events = opt.event_policy == EventPolicy::Always ||
                  (opt.event_policy == EventPolicy::RandomOnly && !model.deterministic());
    auto found = flats_interior(model, default_lambda_grid(model, opt.uniform_levels),
                                events ? InteriorMode::Both : InteriorMode::Gap, opt.events);
    for (FlatHeight& f : found) {
      interior.push_back(f.lambda);
      for (FlatEvidence& e : f.evidence) detail::add_height(hs, f.lambda, e, tol);
    }
    if (has_closed_form(model.process()) || opt.closed_form_override) {
      ClosedFormFlats cf;
      if (opt.closed_form_override) {
        cf = {"override", *opt.closed_form_override};
      } else {
        cf = closed_form_flats(model.process(), model.hamiltonian(), model.beta(), tol);
      }
      if (!detail::same_set(cf.heights, interior, 1e-6)) {
        fail(ErrorKind::InconsistentEvidence, "closed form " + cf.formula + " gives " + detail::set_string(cf.heights) +
                                                  " but the numerics give " + detail::set_string(interior));
      }
      for (double h : cf.heights) detail::add_height(hs, h, {EvidenceKind::ClosedForm, cf.formula}, 1e-6);
    }
  }

  // Geometry: endpoint flats from the pieces, interior ones from their gaps.
  for (const CurveSegment& s : model.segments()) {
    if (!is_flat(s.label) || s.label == PieceLabel::FlatInterior) continue;
    for (FlatHeight& h : hs)
      if (std::abs(h.lambda - s.height) <= tol) h.theta_intervals.emplace_back(s.lo, s.hi);
  }
  for (const auto& f : model.interior_flats())
    for (FlatHeight& h : hs)
      if (std::abs(h.lambda - f.lambda) <= 1e-6 && h.theta_intervals.empty())
        h.theta_intervals.emplace_back(f.pair.lower.value, f.pair.upper.value);

  std::sort(hs.begin(), hs.end(), [](const FlatHeight& a, const FlatHeight& b) { return a.lambda < b.lambda; });
  for (FlatHeight& h : hs) {
    std::sort(h.theta_intervals.begin(), h.theta_intervals.end());
    if (h.theta_intervals.empty())
      fail(ErrorKind::InconsistentEvidence, "flat height without a theta interval: " + std::to_string(h.lambda));
    for (const auto& [a, b] : h.theta_intervals)
      if (!(b > a)) fail(ErrorKind::InconsistentEvidence, "degenerate flat interval at " + std::to_string(h.lambda));
  }
  rep.entries = std::move(hs);
  rep.heights = detail::heights_of(rep.entries);
  return rep;
}

inline FlatPieceReport flat_report(const DoubleWellSpec& g, const PotentialProcess& v, double beta,
                                   const FlatOptions& opt = {}) {
  EffectiveModel model(g, v, beta, opt.effective);
  return flat_report(model, opt);
}

}  // namespace hbar
