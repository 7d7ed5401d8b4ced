#pragma once

#include "spdelab/solver.hpp"

namespace spdelab::functionals {

using solver::EnsembleField;

/// Monte Carlo estimate with its standard error; acceptance comparisons use
/// 3-sigma bands built from stderr_mc.
struct Estimate {
  double value = 0;
  double stderr_mc = 0;
};

/// Static interior observation region (axis-aligned box) and the time window
/// over which the sup is taken.
struct ObservationWindow {
  Vec lo, hi;
  double t_begin = 0.0;
  double t_end = 0.0;  // sup over stored slices with t in (t_begin, t_end]
  int quad_points = 33;  // per axis

  bool contains(const Vec& x) const;
};

/// Checks (0, t_end) x O0 containment in a domain family at sampled times.
bool window_inside(const ObservationWindow& w, const solver::MovingDomain& domain,
                   int time_samples = 16);

/// sup over sampled t of E int_{O0} |u1 - u2|^2 dx, under common Brownian
/// paths (same seed, same grid). Mismatched coupling is an error.
Estimate observation_gap(const EnsembleField& u1, const EnsembleField& u2,
                         const ObservationWindow& w);

/// Same functional without the common-noise requirement; the reconstruction
/// search compares against observation batches that may carry independent
/// Monte Carlo noise. Grids and stored slices must still match.
Estimate observation_misfit(const EnsembleField& u1, const EnsembleField& u2,
                            const ObservationWindow& w);

/// sqrt(E int_{B_r(x0) cap G(t0)} u(t0)^2 dx): local sphere mass. Cell-center
/// inclusion with half-cell correction on the grid-ball intersection.
Estimate sphere_mass(const EnsembleField& u, double t0, const Vec& x0, double r);

/// sqrt(R^{-2} E int int u^2) over (t0 - R^2, t0) x (B_R(x0) cap G(t)); with
/// `clipped` the time interval is (max{0, t0 - R^2}, t0).
Estimate cylinder_energy(const EnsembleField& u, double t0, const Vec& x0, double R,
                         bool clipped);

}  // namespace spdelab::functionals
