#pragma once

#include "spdelab/functionals.hpp"
#include "spdelab/verify.hpp"

namespace spdelab::inverse {

using functionals::Estimate;
using functionals::ObservationWindow;
using geometry::GeometryParams;
using geometry::MovingDomain;
using solver::EnsembleField;
using solver::SPDECoefficients;

/// gamma(t) = (ln kappa0)^2 + exp(1 / t^{n/2}): the stability law's
/// time-dependence aggregate.
double stability_gamma(double kappa0, double t, int dim);

/// Shared desk-scale knobs for forward solves inside inverse pipelines.
struct ExperimentScale {
  int cells = 256;
  int steps = 1024;
  int paths = 192;
  std::uint64_t seed = 1234;
  double horizon = 1.0;
  int slice_stride = 16;
  std::vector<double> extra_slice_times;
};

EnsembleField solve_forward(const MovingDomain& domain, const SPDECoefficients& coeffs,
                            const ExperimentScale& scale);

/// Low-dimensional boundary parametrization searched by the reconstruction.
/// 1-D: endpoint trajectory s(t) = s0 + theta_0 t + theta_1 sin(omega t);
/// 2-D: star bump amplitude p(t) = theta_0 sin(omega t).
struct BoundaryParametrization {
  enum class Basis { EndpointLinearSine, RadialBump };
  Basis basis = Basis::EndpointLinearSine;
  Vec coeffs;
  Mat admissible_box;  // 2 x n_params: row 0 lower bounds, row 1 upper bounds
  double omega = kPi;
  // frozen reference-domain description
  double x_left = 0.0, s0 = 1.0;   // 1-D
  Eigen::Vector2d center{0, 0};    // 2-D
  double r0 = 1.0;
  double horizon = 1.0;

  int parameter_count() const { return static_cast<int>(coeffs.size()); }
  bool inside_box(double slack = 0.0) const;
  BoundaryParametrization with_coeffs(Vec theta) const;
  BoundaryParametrization clamped_to_box() const;
  MovingDomain domain() const;

  /// Admissibility of the materialized family: it passes the
  /// interior-ball and speed-bound checks with the supplied constants.
  bool admissible(const GeometryParams& g, double snapshot_spacing = 0.02) const;
};

// --- operations -------------------------------------------------------------------

struct UniquenessProbe {
  Estimate gap;        // sup_t E int_{O0} |u1 - u2|^2 under common paths
  double hausdorff = 0;   // d(G1(t0), G2(t0)) at t0 = window end
  double modified = 0;    // d_m at the same time
  double noise_floor = 0; // MC stderr of the gap estimate
};

/// Empirical face of the uniqueness theorem: identical initial domains and
/// data, coupled noise; a positive domain distance should force the gap
/// above the coupled-noise floor.
UniquenessProbe uniqueness_probe(const MovingDomain& truth, const MovingDomain& candidate,
                                 const SPDECoefficients& coeffs, const ExperimentScale& scale,
                                 const ObservationWindow& window);

struct SearchConfig {
  int grid_points = 17;        // exhaustive grid per axis
  bool exhaustive = true;      // otherwise coordinate descent
  int descent_sweeps = 60;
  double initial_step = 0.25;  // fraction of the box span
};

struct ReconstructionResult {
  BoundaryParametrization best;
  double misfit = 0;
  bool clamped = false;  // argmin sits on the admissible box boundary
  int evaluations = 0;
};

/// Derivative-free minimization of the data misfit
/// sup_t E int_{O0} |u(theta) - u_obs|^2 over the admissible box, under the
/// observation ensemble's own noise (common paths).
ReconstructionResult reconstruct_boundary(const EnsembleField& observations,
                                          const BoundaryParametrization& model,
                                          const SPDECoefficients& coeffs,
                                          const ExperimentScale& scale,
                                          const ObservationWindow& window,
                                          const SearchConfig& search);

struct StabilityRecord {
  double eps_tilde = 0;   // observation gap
  double gap_stderr = 0;
  double d = 0;           // Hausdorff distance at t0
  double d_m = 0;         // modified distance at t0
  double gamma = 0;       // gamma(t0)
  double t0 = 0;
  double amplitude = 0;   // perturbation amplitude that produced the record
  bool above_floor = true;

  void validate() const;  // range invariants of every emitted record
};

struct StabilityFit {
  double amplitude_a = 0;  // A in d <= A |ln eps|^{-q}
  double exponent_q = 0;
  double q_stderr = 0;
  double q_confidence95_lo = 0;  // one-sided 95% lower bound on q
  int used_records = 0;
};

/// Least squares of ln d on ln|ln eps| over the records above the noise
/// floor; exposed separately so rescaling invariance can be checked on the
/// regression algebra itself.
StabilityFit fit_stability_law(const std::vector<StabilityRecord>& records);

struct StabilitySweepConfig {
  ExperimentScale scale;
  ObservationWindow window;  // t_end = evaluation time t0
  double kappa0 = 2.718281828459045;
  double floor_factor = 3.0;
  double snapshot_spacing = 0.002;
  int threads = 1;  // parallel map over amplitudes; records stay in order
};

struct StabilitySweepResult {
  std::vector<StabilityRecord> records;
  StabilityFit fit;
};

/// For each amplitude: solve the perturbed and reference domains on common
/// paths, record (eps, d, d_m, gamma), then fit the logarithmic law.
StabilitySweepResult stability_sweep(const MovingDomain& reference,
                                     const std::function<MovingDomain(double)>& perturbed,
                                     const std::vector<double>& amplitudes,
                                     const SPDECoefficients& coeffs,
                                     const StabilitySweepConfig& cfg);

struct DomainDifferenceReport {
  double energy_1 = 0;  // sup_t E int_{G1(t) \ G(t)} u1^2
  double energy_2 = 0;
  double eps_tilde = 0;
  double lower_bound_mass = 0;  // E int_{B_rhobar(z)} u^2 at an interior probe
  bool difference_empty = false;
};

/// Difference-set energies and the interior positivity probe feeding the
/// appendix-rate checks.
DomainDifferenceReport domain_difference_energy(const EnsembleField& u1,
                                                const EnsembleField& u2, double eps_tilde,
                                                double rho_bar);

/// Smallest constants closing the two decay shapes over a sweep:
///   energy <= kappa0^C (ln|ln eps|)^{-1/n}   (double-log rate)
///   energy <= kappa0^C |ln eps|^{-1/C}       (single-log rate)
struct DifferenceDecayFit {
  double c_loglog = 0;
  double c_log = 0;
  int used_records = 0;
};

DifferenceDecayFit fit_difference_decay(const std::vector<DomainDifferenceReport>& sweep,
                                        double kappa0, int dim);

}  // namespace spdelab::inverse
