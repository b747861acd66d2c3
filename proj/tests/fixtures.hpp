#pragma once

#include "hbar/hamiltonian.hpp"
#include "hbar/potential.hpp"

namespace fixtures {

// Piecewise-linear double well with wells at -2 and -1.
inline hbar::DoubleWellSpec fix_g(double m, double M) { return hbar::DoubleWellSpec::piecewise_linear(m, M); }

// v0(x) = |1 - 2 frac(x)|.
inline hbar::PotentialProcess tri() { return hbar::PotentialProcess::periodic({{0.0, 1.0}, {0.5, 0.0}}); }

inline hbar::PotentialProcess w_shape(double v_z2 = 0.6) {
  return hbar::PotentialProcess::periodic({{0.0, 1.0}, {0.25, 0.0}, {0.5, v_z2}, {0.75, 0.2}});
}

inline hbar::PotentialProcess iid_three() {
  hbar::Marginal mu;
  mu.atoms = {{0.0, 1.0 / 3}, {0.5, 1.0 / 3}, {1.0, 1.0 / 3}};
  return hbar::PotentialProcess::iid(mu);
}

inline hbar::PotentialProcess markov() {
  hbar::Marginal mu1, mu2;
  mu1.atoms = {{0.0, 0.5}, {0.2, 0.5}};
  mu2.atoms = {{0.8, 0.5}, {1.0, 0.5}};
  return hbar::PotentialProcess::markov(mu1, mu2, 0.5);
}

// Atoms at 0 and 0.5, no atom at 1 but 1 in the support through a uniform part.
inline hbar::PotentialProcess iid_no_top_atom() {
  hbar::Marginal mu;
  mu.atoms = {{0.0, 1.0 / 3}, {0.5, 1.0 / 3}};
  mu.cont_lo = 0.5;
  mu.cont_hi = 1.0;
  mu.cont_weight = 1.0 / 3;
  return hbar::PotentialProcess::iid(mu);
}

inline hbar::PotentialProcess iid_uniform() {
  hbar::Marginal mu;
  mu.cont_lo = 0.0;
  mu.cont_hi = 1.0;
  mu.cont_weight = 1.0;
  return hbar::PotentialProcess::iid(mu);
}

}  // namespace fixtures
