#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <optional>
#include <variant>
#include <vector>

#include "spdelab/common.hpp"

namespace spdelab::geometry {

/// Scalar motion law for a boundary degree of freedom. offset(0) = 0 always,
/// so the domain family is the identity at t = 0.
struct MotionLaw {
  enum class Kind { Static, Linear, Sine, LinearSine, Jump };
  Kind kind = Kind::Static;
  double rate = 0.0;       // Linear/LinearSine: rate * t contribution
  double amplitude = 0.0;  // Sine/LinearSine: amplitude * sin(omega t); Jump: step height
  double omega = 1.0;
  double jump_time = 0.5;  // Jump: offset = 0 for t < jump_time, amplitude after

  double offset(double t) const;
  double offset_rate(double t) const;  // d/dt offset (0 at a jump)

  static MotionLaw statics() { return {}; }
  static MotionLaw linear(double rate);
  static MotionLaw sine(double amplitude, double omega);
  static MotionLaw linear_sine(double rate, double amplitude, double omega);
  static MotionLaw jump(double amplitude, double jump_time);
};

/// Constants of the regularity assumptions; all are config inputs
/// (the theory only asserts their existence).
struct GeometryParams {
  double interior_ball_radius = 0.25;  // R0
  double speed_bound = 1.0;            // E >= 1
  double cone_radius = 0.2;            // rho0
  double cone_aperture = kPi / 6;      // alpha, in (0, pi/4]
  double distance_threshold = 0.1;     // d0
  double two_sphere_ratio = 0.25;      // eta1, in (0, 1/e)

  void validate() const;  // throws invalid_input on violation
};

/// Sampled view of one time slice of a domain: interior cloud plus boundary
/// cloud with outward unit normals. `moving[j]` marks boundary points on the
/// unknown part I(t) as opposed to the fixed part Gamma.
struct DomainSnapshot {
  double time = 0.0;
  double spacing = 0.0;  // sampling resolution; membership tolerance is 2x this
  Mat interior;          // dim x Ni, one point per column
  Mat boundary;          // dim x Nb
  Mat normals;           // dim x Nb, unit outward
  std::vector<std::uint8_t> moving;

  int dim() const { return static_cast<int>(interior.rows() ? interior.rows() : boundary.rows()); }
  bool empty() const { return interior.cols() == 0 && boundary.cols() == 0; }
  double tolerance() const { return 2.0 * spacing; }

  /// Interior and boundary clouds concatenated (samples of the closure).
  Mat closure_points() const;
};

/// CSV point list: coordinates, boundary flag, moving flag, normal
/// components (zeros for interior rows).
std::string snapshot_csv(const DomainSnapshot& snapshot);

// --- concrete desk-scale families -----------------------------------------

/// 1-D interval (x_left, s(t)): fixed left endpoint Gamma, moving right
/// endpoint I(t) = {s(t)}.
struct Interval1D {
  double x_left = 0.0;
  double s0 = 1.0;
  MotionLaw motion;
  bool moving_endpoint = true;  // false: the whole boundary is the fixed part Gamma

  double endpoint(double t) const { return s0 + motion.offset(t); }
  double endpoint_rate(double t) const { return motion.offset_rate(t); }
};

/// 2-D star-shaped domain about `center` with radial boundary
///   r(t, phi) = r_base(phi) + r0 * p(t) * bump(phi),
/// where r_base is a truncated Fourier shape, p is the motion law's offset
/// and bump = sin^4(phi) on (0, pi) (so the lower half circle is the fixed
/// boundary Gamma and the upper half is the moving part I(t)).
struct Star2D {
  Eigen::Vector2d center{0.0, 0.0};
  double r0 = 1.0;
  Vec cos_coeffs;  // k = 1..K relative Fourier amplitudes of the static shape
  Vec sin_coeffs;
  MotionLaw motion;

  double radius(double t, double phi) const;
  double radius_dphi(double t, double phi) const;
  double radius_dt(double t, double phi) const;
  static double bump(double phi);
  static double bump_dphi(double phi);
};

/// Escape hatch for tests and irregular cases: closures for everything.
struct CustomFamily {
  int dim = 1;
  std::function<Vec(double, const Vec&)> forward;   // tau(t, y)
  std::function<Vec(double, const Vec&)> backward;  // rho(t, x)
  std::function<bool(double, const Vec&)> contains;
  /// Fill boundary/normals/moving for time t at the requested spacing.
  std::function<void(double, double, Mat&, Mat&, std::vector<std::uint8_t>&)> boundary;
};

/// Derivatives of the inverse map rho(t, .) at a point, as consumed by the
/// pulled-back operator: grad(k,i) = d rho_k / d x_i, second(k,i) =
/// d^2 rho_k / d x_i^2, time_deriv(k) = d rho_k / dt, all at x = tau(t, y).
struct PullbackDerivatives {
  Mat grad;
  Mat second;
  Vec time_deriv;
};

/// A family {G(t)} presented through the diffeomorphism tau(t,.) from the
/// reference domain G(0) and its inverse rho(t,.). Immutable after
/// construction; every member function is const and reentrant.
class MovingDomain {
 public:
  MovingDomain() : family_(Interval1D{}) {}

  static MovingDomain interval(double x_left, double s0, MotionLaw motion,
                               double horizon, bool moving_endpoint = true);
  static MovingDomain star(Eigen::Vector2d center, double r0, Vec cos_coeffs,
                           Vec sin_coeffs, MotionLaw motion, double horizon);
  static MovingDomain custom(CustomFamily family, double horizon);

  int dim() const;
  double horizon() const { return horizon_; }

  Vec forward(double t, const Vec& y) const;   // tau
  Vec backward(double t, const Vec& x) const;  // rho
  bool contains(double t, const Vec& x) const;

  /// Sampled clouds of G(t) at the given resolution.
  DomainSnapshot snapshot(double t, double spacing) const;

  /// True if the reference boundary point y lies on the pullback of the
  /// moving part I(t); false on Gamma.
  bool reference_boundary_is_moving(const Vec& y) const;

  /// Finite-difference (analytic for the interval family) derivatives of rho.
  PullbackDerivatives pullback_jacobians(double t, const Vec& y) const;

  const Interval1D* as_interval() const { return std::get_if<Interval1D>(&family_); }
  const Star2D* as_star() const { return std::get_if<Star2D>(&family_); }

 private:
  std::variant<Interval1D, Star2D, CustomFamily> family_;
  double horizon_ = 1.0;
};

// --- set-distance calculus --------------------------------------------------

/// min over cloud columns of |x - column|; cloud must be nonempty.
double nearest_distance(const Vec& x, const Mat& cloud);

/// Hausdorff distance between sampled closures (max of the two directed
/// sup-of-dist terms).
double hausdorff_distance(const DomainSnapshot& a, const DomainSnapshot& b);

/// Boundary-to-closure variant; always <= hausdorff_distance on the same pair.
double modified_distance(const DomainSnapshot& a, const DomainSnapshot& b);

/// {x in G : B_delta(x) subset G}, sampled: interior points whose distance to
/// the boundary cloud is >= delta. The result's boundary cloud is empty; an
/// empty interior is a valid output (delta above the inradius).
DomainSnapshot interior_shrink(const DomainSnapshot& g, double delta);

/// Interior-ball test at every sampled boundary point (Assumption 1.2(i)
/// shape): B_R0(x - R0 nu(x)) inside G up to the snapshot tolerance.
bool check_interior_ball(const DomainSnapshot& g, double interior_ball_radius);

/// Sampling control for the space-time speed-bound test.
struct SpeedBoundGrid {
  int time_samples = 12;
  int point_samples = 40;     // interior anchor points per time
  std::vector<double> radii;  // tested R values
  int sphere_samples = 24;    // containment probes per ball / cylinder slice
  int cylinder_time_samples = 8;
};

/// Assumption 1.3 shape: whenever B_{E R}(x0) fits inside G(t0), the cylinder
/// (max{t0 - R^2, 0}, t0) x B_R(x0) stays inside the moving family.
bool check_speed_bound(const MovingDomain& family, double speed_bound,
                       const SpeedBoundGrid& grid);

/// Truncated open cone {x in B_rho0(x0) : (x-x0).axis / |x-x0| > cos(alpha)}.
bool cone_contains(const Vec& apex, const Vec& axis, double rho0, double alpha,
                   const Vec& x);

/// Sampled point cloud of the truncated cone (interior samples only).
DomainSnapshot lipschitz_cone(const Vec& apex, const Vec& axis, double rho0,
                              double alpha, double spacing);

/// Free-function form of MovingDomain::pullback_jacobians.
PullbackDerivatives pullback_jacobians(const MovingDomain& family, double t,
                                       const Vec& y);

/// Finite-difference step sizes for the generic pullback derivatives.
struct FdSteps {
  double gradient = 1e-6;
  double second = 4e-4;
  double time = 1e-6;
};

/// Always finite-difference (even for families with analytic derivatives),
/// at caller-chosen steps; the default-step path is what the solver uses.
PullbackDerivatives pullback_jacobians_fd(const MovingDomain& family, double t,
                                          const Vec& y, const FdSteps& steps);

}  // namespace spdelab::geometry
