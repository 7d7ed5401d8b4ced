#pragma once

#include "spdelab/functionals.hpp"
#include "spdelab/weights.hpp"

namespace spdelab::verify {

using functionals::Estimate;
using geometry::GeometryParams;
using geometry::MovingDomain;
using solver::EnsembleField;
using solver::ManufacturedSolution;
using weights::CarlemanWeights;

/// Ordinary least squares y = intercept + slope * x with the slope's
/// standard error (used by decay fits and the stability regression).
struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double slope_stderr = 0;
  int points = 0;
};

LinearFit fit_line(const Vec& x, const Vec& y);

// --- Carleman estimate --------------------------------------------------------

/// Per-term integrals of the weighted energy inequality. `margin` is
/// rhs - lhs, nonnegative (within Monte Carlo error) for admissible inputs.
struct CarlemanResidualReport {
  double lhs_mass = 0;        // lambda e^{-C0} |ln(t0-t+a)|^{-3} e^{2 phi} u^2
  double lhs_gradient = 0;    // (1/2) e^{-2C0} sigma_a |ln|^{-3} e^{2 phi} |grad u|^2
  double rhs_source = 0;      // e^{2C0} sigma_a^2 e^{2 phi} g1^2
  double m_initial_gradient = 0;  // (a+b)^2 |grad(e^phi u)|^2 at t0 - b
  double m_focal_mass = 0;        // a lambda e^{C0} sigma(a)^{-2 lambda} u(t0)^2
  double m_initial_mass = 0;      // (|x-x0|^2/16 + (a+b)/2) sigma(a+b)^{-2 lambda} u(t0-b)^2
  double m_boundary_flux = 0;     // -(x-x0).nu (|grad v|^2 + (t0-t+a) e^{2phi} g2^2/4)
  double n_noise_mass = 0;        // (1/2 + n/4)(t0-t+a) e^{2 phi} g2^2
  double n_noise_gradient = 0;    // (t0-t+a)^2 e^{2 phi} |grad g2|^2
  double margin = 0;
  double margin_stderr = 0;
  int paths = 1;

  double lhs() const { return lhs_mass + lhs_gradient; }
  double boundary_aggregate() const {
    return m_initial_gradient + m_focal_mass + m_initial_mass + m_boundary_flux;
  }
  double noise_aggregate() const { return n_noise_mass + n_noise_gradient; }
  double rhs() const { return rhs_source + boundary_aggregate() + noise_aggregate(); }
};

struct ResidualGrid {
  int cells = 384;
  int time_steps = 384;  // used for deterministic solutions only
};

/// Evaluates every integral of the Carleman inequality for a manufactured
/// solution by grid quadrature (Monte Carlo over paths when g2 != 0; then
/// `ensemble` must be supplied and span [0, t0]). Hypothesis violations
/// (lambda, a, b windows; u not vanishing on the boundary) raise
/// invalid_input naming the violated bound.
CarlemanResidualReport carleman_residual(const ManufacturedSolution& solution,
                                         const MovingDomain& domain,
                                         const CarlemanWeights& weights,
                                         const ResidualGrid& grid = {},
                                         const stochastic::Ensemble* ensemble = nullptr);

// --- two-sphere one-cylinder -----------------------------------------------------

struct TwoSphereParams {
  double small_radius = 0;   // r
  double middle_radius = 0;  // rho
  double large_radius = 0;   // R
  Vec center;                // x0
  double focal_time = 0;     // t0
  bool clipped = false;      // zero-initial variant (time window clipped at 0)

  void validate(const GeometryParams& g) const;
};

struct TwoSphereReport {
  TwoSphereParams params;
  Estimate local;   // epsilon_1, mass on B_r
  Estimate middle;  // left-hand side, mass on B_rho
  Estimate energy;  // cylinder energy E_1 (or E_2 when clipped)
};

TwoSphereReport measure_two_sphere(const EnsembleField& field, const TwoSphereParams& p);

/// Single-constant fit of  middle <= C (R/rho) |ln rho|^{3/2} E^{1-theta} eps^theta,
/// theta = 1/(C (ln R - ln r)), over a sweep; needs >= 3 usable reports.
struct TwoSphereFit {
  double c_mult = 0;
  double c_exp = 0;
  int used_reports = 0;

  double theta(const TwoSphereParams& p) const;
  double bound(const TwoSphereReport& r) const;  // right-hand side at the fit
};

TwoSphereFit two_sphere_fit(const std::vector<TwoSphereReport>& sweep);

struct TwoSphereValidation {
  int checked = 0;
  int violations = 0;   // lhs exceeds bound beyond the 3-sigma band
  double worst_slack = INFINITY;  // min over reports of (bound - lhs)/bound
};

TwoSphereValidation two_sphere_validate(const TwoSphereFit& fit,
                                        const std::vector<TwoSphereReport>& holdout);

// --- strong unique continuation probe ---------------------------------------------

struct SucpReport {
  Vec radii;
  Vec masses;   // E int_{B_r} u(t0)^2
  Vec stderrs;
  double slope = 0;            // d log mass / d log r
  double vanishing_order = 0;  // (slope - n) / 2
  bool conclusive = false;     // false when every mass sits below the MC floor
};

SucpReport sucp_probe(const EnsembleField& field, double t0, const Vec& x0,
                      const std::vector<double>& radii);

// --- iteration lemma ----------------------------------------------------------------

struct IterationState {
  double x1 = 0;
  double c1 = 2.0;  // > 1
  double s = 0.5;   // in (0, 1)
  int n = 1;
};

/// Closed-form majorant C1^{1/(1-s)} x1^{s^{n-1}} of the recursion
/// x_k <= C1 x_{k-1}^s.
double geometric_iteration_bound(const IterationState& st);

/// Exact rational arithmetic: with x1 = px/qx, C1 = pc/qc > 1, s = ps/qs in
/// (0,1), both the majorant and the equality-unrolled recursion share the
/// factor x1^{s^{n-1}}, so domination reduces to an exact comparison of the
/// C1-exponents 1/(1-s) and (1 + s + ... + s^{n-2}). Returns true when the
/// majorant dominates (and it always must).
bool iteration_bound_dominates_exact(long long px, long long qx, long long pc,
                                     long long qc, long long ps, long long qs, int n);

// --- cone chains and small propagation ------------------------------------------------

struct ConeChain {
  Vec apex;          // x0 on the boundary
  Vec axis;          // zeta, unit
  double mu1 = 0;    // rho0 / (1 + sin alpha)
  double rho1 = 0;   // eta1 mu1 sin(alpha) / (4E)
  double contraction = 0;  // a = (1 - eta1 sin(alpha)/(4E)) / (1 + eta1 sin(alpha)/(4E))
  int k_bar = 0;
  double sigma_tilde = 0;
  GeometryParams params;

  double mu(int k) const;       // 1-based
  double rho(int k) const;
  Vec center(int k) const;      // w_k
};

/// Builds the geometric ball chain descending the Lipschitz cone; k_bar is
/// the smallest index with mu_k - rho_k < sigma_tilde and must land inside
/// the two-sided logarithmic bracket.
ConeChain cone_chain_build(const Vec& apex, const Vec& axis, const GeometryParams& g,
                           double sigma_tilde);

/// Ball-chain nesting: B_{rho_{k+1}}(w_{k+1}) in B_{3 rho_k}(w_k) in ... in
/// the cone, for all k <= k_bar.
bool cone_chain_nesting_ok(const ConeChain& chain, double tol = 1e-9);

/// Two-sided bracket on k_bar.
bool cone_chain_kbar_in_bracket(const ConeChain& chain);

struct SmallPropagationReport {
  Vec chain_masses;    // E int_{B_rho_k(w_k)} u(t0)^2 along the chain
  Vec chain_stderrs;
  double sigma_local = 0;     // first chain mass
  double step_constant = 0;   // fitted C with m_{k+1} <= C kappa0^2 m_k^s
  double step_exponent = 0;   // fitted s in (0,1)
  double lemma_bound = 0;     // iteration-lemma majorant of the last mass
  double boundary_value = 0;  // E |u(t0, x0)|^2
  double boundary_stderr = 0;
  double fitted_constant = 0;  // smallest C with value <= C kappa0^C |ln sigma|^{-alpha/C}
  bool informative = true;     // false when sigma_local is ~1 or below MC floor
};

SmallPropagationReport small_propagation_check(const EnsembleField& field,
                                               const ConeChain& chain, double kappa0);

}  // namespace spdelab::verify
