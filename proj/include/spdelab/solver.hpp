#pragma once

#include <Eigen/Sparse>

#include <functional>
#include <string>
#include <vector>

#include "spdelab/geometry.hpp"
#include "spdelab/stochastic.hpp"

namespace spdelab::solver {

using geometry::MovingDomain;

/// Scalar coefficient field c(t, x) over physical space-time, with the sup
/// bound used by the q1/q2 norm combinations.
struct ScalarField {
  std::function<double(double, const Vec&)> fn;
  double bound = 0.0;
  bool time_invariant = true;

  double operator()(double t, const Vec& x) const { return fn ? fn(t, x) : 0.0; }
  static ScalarField zero();
  static ScalarField constant(double value);
};

struct VectorField {
  std::function<Vec(double, const Vec&)> fn;
  double bound = 0.0;
  bool time_invariant = true;

  Vec operator()(double t, const Vec& x) const;
  static VectorField zero(int dim);
  static VectorField constant(Vec value);
};

/// Coefficients and data of the forward equation
///   du - Laplace u dt = (a1 . grad u + b1 u) dt + c1 u dW,  u = f on Gamma,
///   u = 0 on I(t), u(0) = u0.
struct SPDECoefficients {
  VectorField gradient_drift;   // a1
  ScalarField zeroth_order;     // b1
  ScalarField noise_intensity;  // c1
  ScalarField boundary_data;    // f on Gamma
  double boundary_floor = 0.0;  // F with ||f(t,.)||^2_Linf(Gamma) >= F
  std::function<double(const Vec&)> initial_data;  // u0 on G(0)
  double regularity_bound = 2.718281828459045;     // kappa0 >= e
  double q1 = 0.0;  // ||a1||^2 + 2||b1|| + ||c1||^2 + 1
  double q2 = 0.0;  // ||a1||^2/2 + ||b1|| + ||c1||^2/2 + 1

  double recompute_q1() const;
  double recompute_q2() const;
  /// Fills q1/q2 from the field bounds.
  SPDECoefficients& finalize();
  /// Checks kappa0, stored q1/q2 against recomputation, and (when
  /// boundary_floor > 0) that f attains the floor at sampled times.
  void validate(const MovingDomain& domain, int time_samples = 16) const;
};

/// Uniform node-centered reference grid; 1-D stores the two endpoint nodes
/// (Dirichlet rows), 2-D stores the active interior lattice of G(0) with
/// Dirichlet closure through off-grid boundary records.
class SpatialGrid {
 public:
  struct BoundaryRecord {
    Vec point;          // reference coordinates on the boundary of G(0)
    bool moving = false;  // pullback of I(t) vs Gamma
    int node = -1;        // 1-D: stored node index; 2-D: -1
  };

  static SpatialGrid interval(const MovingDomain& domain, int cells);
  static SpatialGrid embedded(const MovingDomain& domain, int cells_per_side);

  int dim() const { return dim_; }
  double spacing() const { return spacing_; }
  int node_count() const { return static_cast<int>(nodes_.cols()); }
  Vec node(int i) const { return nodes_.col(i); }
  const Mat& nodes() const { return nodes_; }

  int unknown_count() const { return static_cast<int>(node_of_unknown_.size()); }
  int unknown_of_node(int node) const { return unknown_of_node_[node]; }
  int node_of_unknown(int unknown) const { return node_of_unknown_[unknown]; }

  const std::vector<BoundaryRecord>& boundary_records() const { return boundary_; }

  /// Axis neighbors per unknown (2*dim entries: -x, +x, -y, +y). Values >= 0
  /// are unknown ids; value -1-k refers to boundary record k.
  const std::vector<std::array<int, 4>>& stencil() const { return stencil_; }
  /// 2-D diagonal neighbors per unknown (++, +-, -+, --), -1 when missing.
  const std::vector<std::array<int, 4>>& diagonal_stencil() const { return diag_; }

  /// Node-centered quadrature weights on the reference domain (trapezoid
  /// closure in 1-D, h^2 per active node in 2-D).
  const Vec& reference_weights() const { return weights_; }

  /// Linear/bilinear interpolation of nodal values at a reference point.
  double interpolate(const Eigen::Ref<const Vec>& nodal_values, const Vec& y) const;

 private:
  int dim_ = 1;
  double spacing_ = 0;
  Mat nodes_;
  std::vector<int> unknown_of_node_, node_of_unknown_;
  std::vector<BoundaryRecord> boundary_;
  std::vector<std::array<int, 4>> stencil_, diag_;
  Vec weights_;
  // 2-D lattice bookkeeping for interpolation
  Eigen::Vector2d lattice_lo_;
  int lattice_nx_ = 0, lattice_ny_ = 0;
  std::vector<int> lattice_index_;
};

/// Discrete pulled-back generator L at one time: value rows over unknowns,
/// Dirichlet closure split into a boundary-coupling matrix.
struct DiscreteOperator {
  double time = 0;
  Eigen::SparseMatrix<double> interior;  // unknowns x unknowns
  Eigen::SparseMatrix<double> boundary;  // unknowns x boundary_records
};

/// Assembles the variable-coefficient generator of the pulled-back equation:
/// tr(A D^2 v) + beta . grad v + b1 v with A = J J^T, beta = (x-Laplacian of
/// rho) - d rho/dt + J a1, J = d rho/dx at x = tau(t, y). For the identity
/// family this is exactly the 3-point (1-D) / 5-point (2-D) Laplacian.
DiscreteOperator assemble_pullback_operator(const MovingDomain& domain, double t,
                                            const SpatialGrid& grid,
                                            const SPDECoefficients& coeffs);

/// Smallest eigenvalue of the principal symbol A = J J^T over all grid nodes.
double principal_symbol_min_eigenvalue(const MovingDomain& domain, double t,
                                       const SpatialGrid& grid);

/// Dirichlet data of all boundary records at time t (f on Gamma, 0 on I).
Vec boundary_values(const MovingDomain& domain, const SpatialGrid& grid,
                    const SPDECoefficients& coeffs, double t);

/// One pulled-back solution trajectory sample at a fixed time.
struct FieldSample {
  double time = 0;
  int path_index = 0;
  Vec values;  // per grid node
};

/// One semi-implicit Euler-Maruyama step: diffusion/drift implicit at the new
/// time, multiplicative noise explicit (Ito), Dirichlet rows re-pinned.
FieldSample step(const MovingDomain& domain, const SpatialGrid& grid,
                 const SPDECoefficients& coeffs, const FieldSample& state, double dt,
                 double brownian_increment);

struct SolveOptions {
  int slice_stride = 16;                  // store every k-th step plus the last
  std::vector<double> extra_slice_times;  // snapped to the grid, always stored
  std::size_t memory_limit_bytes = 3ull << 30;
};

/// Monte Carlo family of pulled-back trajectories on a shared grid. Slices
/// store every path's nodal values (nodes x N) at the retained step times.
class EnsembleField {
 public:
  MovingDomain domain;
  SpatialGrid grid;
  SPDECoefficients coeffs;
  std::uint64_t base_seed = 0;
  int paths = 0;
  Vec time_grid;

  std::vector<double> slice_times;
  std::vector<int> slice_steps;
  std::vector<Mat> slices;

  int slice_near(double t, double tol = -1) const;  // throws if none within tol
  const Mat& slice(int index) const { return slices[index]; }

  /// Pushforward evaluation: u(t_slice, x_phys) for one path.
  double eval_physical(int slice_index, int path, const Vec& x) const;
};

/// Forward Monte Carlo solve; deterministic given the ensemble seed,
/// independent of worker count (time-major stepping, one factorization per
/// step shared by all paths).
EnsembleField solve(const MovingDomain& domain, const SPDECoefficients& coeffs,
                    const stochastic::Ensemble& ensemble, const SpatialGrid& grid,
                    const SolveOptions& options = {});

/// Streaming moment accumulation (no per-path storage): E[u] and E[u^2] per
/// stored slice.
struct MomentField {
  std::vector<double> slice_times;
  Mat mean;    // nodes x slices
  Mat second;  // nodes x slices
};

MomentField solve_moments(const MovingDomain& domain, const SPDECoefficients& coeffs,
                          const stochastic::Ensemble& ensemble, const SpatialGrid& grid,
                          int slice_stride = 16);

// --- heat-kernel utilities ----------------------------------------------------

/// K(t, x; t0, y) = (t0 - t)^{-n/2} exp(-|x-y|^2 / (4 (t0 - t))), t < t0.
double heat_kernel(double t, const Vec& x, double t0, const Vec& y);

/// Physical volume element per node at time t: h^n / |det d(rho)/dx|.
Vec physical_weights(const MovingDomain& domain, const SpatialGrid& grid, double t);

/// Physical node positions tau(t, y_i).
Mat physical_points(const MovingDomain& domain, const SpatialGrid& grid, double t);

struct CutoffBall {
  Vec center;
  double inner_radius = 0;  // rho1
  double outer_radius = 0;  // rho2 > rho1
};

struct MassEstimate {
  double value = 0;
  double stderr_mc = 0;
};

/// H(t; t0, y): heat-kernel-weighted mass of the cutoff solution, estimated
/// per path and averaged. The radial cutoff is 1 on B_{(2rho1+rho2)/3} and 0
/// outside B_{(rho1+2rho2)/3}.
MassEstimate weighted_mass_H(const EnsembleField& field, double t, double t0,
                             const Vec& y, const CutoffBall& region);

/// Ratio  int_{B_rho1} H(t; t0, y) dy  /  (2^n pi^{n/2} int_{B_rho1 cap G(t0)} v(t0)^2),
/// which tends to 1 as t -> t0.
double weighted_mass_limit_ratio(const EnsembleField& field, double t, double t0,
                                 const CutoffBall& region, int y_samples = 64);

struct Cylinder {
  Vec center;
  double radius = 0;
  double t_begin = 0, t_end = 0;
};

struct CaccioppoliReport {
  double gradient_energy = 0;  // E int int over the inner cylinder of |grad u|^2
  double mass = 0;             // E int int over the outer cylinder of u^2
  double scale = 0;            // 1/R^2 + 1/(rho2 - rho1)^2
  double fitted_constant = 0;  // gradient_energy / (scale * mass)
};

CaccioppoliReport caccioppoli_check(const EnsembleField& field, const Cylinder& inner,
                                    const Cylinder& outer);

// --- manufactured solutions ----------------------------------------------------

/// Closed-form solution of the model equation du - Laplace u dt = g1 dt + g2 dW
/// on a (possibly moving) domain, vanishing on the whole boundary. The third
/// argument of every closure is the driving Brownian value W(t) (ignored by
/// deterministic members).
struct ManufacturedSolution {
  std::string name;
  bool stochastic = false;
  std::function<double(double, const Vec&, double)> value;
  std::function<Vec(double, const Vec&, double)> gradient;
  std::function<double(double, const Vec&, double)> drift_source;  // g1
  std::function<double(double, const Vec&, double)> noise_source;  // g2
  std::function<Vec(double, const Vec&, double)> noise_source_gradient;
};

/// Decaying Dirichlet eigenmode alpha(t) sin(k pi xi) on a 1-D interval
/// family (xi the normalized reference coordinate); g1 collects the motion
/// and damping terms, g2 = 0.
ManufacturedSolution eigenmode_solution(const MovingDomain& domain, int mode,
                                        double damping);

/// Gaussian bump advected with the domain, pinned to zero at both endpoints.
ManufacturedSolution advected_bump_solution(const MovingDomain& domain, double center,
                                            double width);

/// Geometric-Brownian-in-time profile u = exp(beta W - beta^2 t/2) sin(pi xi)
/// on a static interval; g1 = (pi/L)^2 u, g2 = beta u.
ManufacturedSolution geometric_brownian_solution(const MovingDomain& domain, double beta);

}  // namespace spdelab::solver
