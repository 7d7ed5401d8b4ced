#pragma once

#include <memory>
#include <string>

#include "spdelab/common.hpp"

namespace spdelab::weights {

/// sigma(s) = s * exp(-int_0^s [1 - exp(-1/(ln t)^2)] dt/t) on (0, 1/e],
/// evaluated by adaptive quadrature after the substitution t = e^{-1/u},
/// which turns the integrand into the smooth (1 - e^{-u^2})/u^2 on (0, -1/ln s].
double sigma(double s, double tol = 1e-12);

/// sigma'(s) = (sigma(s)/s) * exp(-1/(ln s)^2) (closed form given sigma).
double sigma_derivative(double s, double tol = 1e-12);

/// C0 = int_0^{1/e} [1 - exp(-1/(ln t)^2)] dt/t, the tightest constant with
/// sigma(s)/s >= e^{-C0}; the infimum of sigma(s)/s sits at s = 1/e.
double compute_c0_quadrature(double tol = 1e-12);

/// Precomputed sigma on a log-spaced grid with monotone Hermite interpolation
/// (exact nodal derivatives). sigma is evaluated millions of times inside the
/// Carleman integrals; the table keeps that cheap.
class SigmaTable {
 public:
  static SigmaTable build(int nodes = 2048, double s_min = 1e-12);

  double value(double s) const;
  double derivative(double s) const;
  double c0() const { return c0_; }

  /// Tightest single constant C with both sigma(s) >= s e^{-C} and
  /// sigma'(s) >= e^{-C} on (0, 1/e]. The ratio bound is tight at c0; the
  /// derivative adds one because s sigma'/sigma = exp(-1/(ln s)^2) >= e^{-1}
  /// with equality at s = 1/e.
  double bounds_constant() const { return c0_ + 1.0; }

  const Vec& grid() const { return grid_; }
  const Vec& values() const { return values_; }
  const Vec& derivatives() const { return derivatives_; }

 private:
  Vec grid_, values_, derivatives_;
  double c0_ = 0;
  double s_min_ = 0;
};

/// Tightest C0 certified by a table: by monotonicity of sigma(s)/s the
/// infimum is at the right endpoint, so C0 = -ln(sigma(1/e) * e).
double compute_c0(const SigmaTable& table);

/// CSV rows (s, sigma, sigma_prime) of the table grid.
std::string sigma_table_csv(const SigmaTable& table);

/// Integrated-form residual of the sigma Cauchy problem at s: the ODE
/// d/ds ln(sigma/(s sigma')) = 2/(s |ln s|^3) with sigma(0)=0, sigma'(0)=1
/// integrates to ln(sigma/(s sigma')) = (ln s)^{-2}; the residual is the
/// defect of that identity for the table's values.
double sigma_ode_residual(const SigmaTable& table, double s);

/// The Carleman weight tuple: focal point (t0, x0), time shift a > 0,
/// lookback b in (0, t0], strength lambda >= 1, with a + b <= 1/e.
struct CarlemanWeights {
  double focal_time = 0.5;             // t0
  Vec focal_point;                     // x0
  double time_shift = 0.01;            // a
  double lookback = 0.25;              // b
  double strength = 1.0;               // lambda
  std::shared_ptr<const SigmaTable> sigma;

  void validate() const;
  double shifted_time(double t) const { return focal_time - t + time_shift; }
  /// sigma_a(t) = sigma(t0 - t + a); requires t in [t0 - b, t0].
  double sigma_a(double t) const;
};

/// Shared default table (built once, immutable, safe for concurrent reads).
std::shared_ptr<const SigmaTable> shared_sigma_table();

/// phi(t,x) = -|x-x0|^2 / (8(t0-t+a)) - lambda ln sigma_a(t).
double phi(double t, const Vec& x, const CarlemanWeights& w);

/// grad phi = -(x-x0)/(4(t0-t+a)).
Vec phi_gradient(double t, const Vec& x, const CarlemanWeights& w);

/// Delta phi = -n/(4(t0-t+a)).
double phi_laplacian(double t, int dim, const CarlemanWeights& w);

/// Membership in the weight sublevel set D_{rho,a}:
///   |x-x0|^2/(8 lambda (t0-t+a)) + ln(t0-t+a) < ln(rho^2/(8 lambda)),
/// for t <= t0.
bool level_set_membership(double t, const Vec& x, double rho, const CarlemanWeights& w);

struct WeightBoundsReport {
  double min_log_margin_inner = 0;  // min over D_{rho,a} of phi - lambda ln(8 lambda/rho^2)
  double fitted_log_c = 0;          // per-lambda log of the smallest annulus constant
  double fitted_c = 0;              // exp(fitted_log_c)
  long inner_samples = 0;
  long annulus_samples = 0;
  bool inner_bound_holds = false;
};

/// Verifies e^phi >= (8 lambda/rho^2)^lambda on D_{rho,a} and fits the
/// smallest C with (t0-t+a)^{-k} e^phi <= C^lambda (lambda/rho^2)^{lambda+k}
/// on D_{2rho,a} \ D_{rho,a}. Everything is evaluated in log space.
WeightBoundsReport weight_bounds_check(const CarlemanWeights& w, double rho, int k,
                                       int time_samples = 160, int space_samples = 160);

/// Smooth transition 1 -> 0 across (lo, hi), built from the normalized
/// integral of the standard bump.
class Mollifier {
 public:
  static Mollifier between(double lo, double hi, int table_nodes = 2048);

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double normalization() const { return normalization_; }

  double bump(double tau) const;               // psi_1
  double value(double tau) const;              // psi_2: 1 below lo, 0 above hi
  double derivative(double tau) const;         // psi_2'
  double second_derivative(double tau) const;  // psi_2''

 private:
  double lo_ = 0, hi_ = 1;
  double normalization_ = 1;
  Vec grid_, cumulative_;
};

/// Composite space-time cutoff psi_2(|x-x0|^2/(8 lambda (t0-t+a)) + ln(t0-t+a))
/// with levels ln((R1/2)^2/(8 lambda)) and ln(R1^2/(8 lambda)): equals 1 on
/// D_{R1/2,a} and 0 outside D_{R1,a}.
struct CutoffEval {
  double value = 0;
  Vec gradient;
  double time_deriv = 0;
  double laplacian = 0;
};

class SpaceTimeCutoff {
 public:
  SpaceTimeCutoff(const CarlemanWeights& w, double outer_radius);  // R1

  CutoffEval eval(double t, const Vec& x) const;
  double outer_radius() const { return outer_radius_; }
  const Mollifier& profile() const { return profile_; }

 private:
  CarlemanWeights weights_;
  double outer_radius_;
  Mollifier profile_;
};

CutoffEval space_time_cutoff(double t, const Vec& x, const CarlemanWeights& w,
                             double outer_radius);

}  // namespace spdelab::weights
