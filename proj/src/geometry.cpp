#include "spdelab/geometry.hpp"

#include <cmath>
#include <cstdio>

namespace spdelab::geometry {

// --- MotionLaw ---------------------------------------------------------------

double MotionLaw::offset(double t) const {
  switch (kind) {
    case Kind::Static: return 0.0;
    case Kind::Linear: return rate * t;
    case Kind::Sine: return amplitude * std::sin(omega * t);
    case Kind::LinearSine: return rate * t + amplitude * std::sin(omega * t);
    case Kind::Jump: return t < jump_time ? 0.0 : amplitude;
  }
  return 0.0;
}

double MotionLaw::offset_rate(double t) const {
  switch (kind) {
    case Kind::Static: return 0.0;
    case Kind::Linear: return rate;
    case Kind::Sine: return amplitude * omega * std::cos(omega * t);
    case Kind::LinearSine: return rate + amplitude * omega * std::cos(omega * t);
    case Kind::Jump: return 0.0;
  }
  return 0.0;
}

MotionLaw MotionLaw::linear(double rate) {
  MotionLaw m;
  m.kind = Kind::Linear;
  m.rate = rate;
  return m;
}

MotionLaw MotionLaw::sine(double amplitude, double omega) {
  MotionLaw m;
  m.kind = Kind::Sine;
  m.amplitude = amplitude;
  m.omega = omega;
  return m;
}

MotionLaw MotionLaw::linear_sine(double rate, double amplitude, double omega) {
  MotionLaw m;
  m.kind = Kind::LinearSine;
  m.rate = rate;
  m.amplitude = amplitude;
  m.omega = omega;
  return m;
}

MotionLaw MotionLaw::jump(double amplitude, double jump_time) {
  MotionLaw m;
  m.kind = Kind::Jump;
  m.amplitude = amplitude;
  m.jump_time = jump_time;
  return m;
}

// --- GeometryParams ---------------------------------------------------------

void GeometryParams::validate() const {
  if (!(interior_ball_radius > 0)) throw invalid_input("GeometryParams: R0 must be positive");
  if (!(speed_bound >= 1.0)) throw invalid_input("GeometryParams: speed bound must be >= 1");
  if (!(cone_radius > 0)) throw invalid_input("GeometryParams: cone radius must be positive");
  if (!(cone_aperture > 0 && cone_aperture <= kPi / 4 + 1e-12))
    throw invalid_input("GeometryParams: cone aperture must lie in (0, pi/4]");
  if (!(distance_threshold > 0)) throw invalid_input("GeometryParams: d0 must be positive");
  if (!(two_sphere_ratio > 0 && two_sphere_ratio < kInvE))
    throw invalid_input("GeometryParams: eta1 must lie in (0, 1/e)");
}

// --- DomainSnapshot ----------------------------------------------------------

Mat DomainSnapshot::closure_points() const {
  const int ni = static_cast<int>(interior.cols());
  const int nb = static_cast<int>(boundary.cols());
  Mat all(dim(), ni + nb);
  if (ni) all.leftCols(ni) = interior;
  if (nb) all.rightCols(nb) = boundary;
  return all;
}

std::string snapshot_csv(const DomainSnapshot& snapshot) {
  const int dim = snapshot.dim();
  std::string out = dim == 1 ? "x,boundary,moving,nx\n" : "x,y,boundary,moving,nx,ny\n";
  char buf[160];
  auto row = [&](const Vec& p, int boundary, int moving, const Vec& normal) {
    if (dim == 1)
      std::snprintf(buf, sizeof buf, "%.17g,%d,%d,%.17g\n", p[0], boundary, moving, normal[0]);
    else
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d,%d,%.17g,%.17g\n", p[0], p[1], boundary,
                    moving, normal[0], normal[1]);
    out += buf;
  };
  const Vec zero = Vec::Zero(dim);
  for (int i = 0; i < snapshot.interior.cols(); ++i) row(snapshot.interior.col(i), 0, 0, zero);
  for (int j = 0; j < snapshot.boundary.cols(); ++j)
    row(snapshot.boundary.col(j), 1, snapshot.moving.empty() ? 0 : snapshot.moving[j],
        snapshot.normals.col(j));
  return out;
}

// --- Star2D ------------------------------------------------------------------

double Star2D::bump(double phi) {
  phi = std::fmod(phi, 2 * kPi);
  if (phi < 0) phi += 2 * kPi;
  if (phi <= 0 || phi >= kPi) return 0.0;
  const double s = std::sin(phi);
  return s * s * s * s;
}

double Star2D::bump_dphi(double phi) {
  phi = std::fmod(phi, 2 * kPi);
  if (phi < 0) phi += 2 * kPi;
  if (phi <= 0 || phi >= kPi) return 0.0;
  const double s = std::sin(phi);
  return 4.0 * s * s * s * std::cos(phi);
}

double Star2D::radius(double t, double phi) const {
  double rel = 1.0;
  for (int k = 0; k < cos_coeffs.size(); ++k) rel += cos_coeffs[k] * std::cos((k + 1) * phi);
  for (int k = 0; k < sin_coeffs.size(); ++k) rel += sin_coeffs[k] * std::sin((k + 1) * phi);
  return r0 * rel + r0 * motion.offset(t) * bump(phi);
}

double Star2D::radius_dphi(double t, double phi) const {
  double rel = 0.0;
  for (int k = 0; k < cos_coeffs.size(); ++k) rel += -cos_coeffs[k] * (k + 1) * std::sin((k + 1) * phi);
  for (int k = 0; k < sin_coeffs.size(); ++k) rel += sin_coeffs[k] * (k + 1) * std::cos((k + 1) * phi);
  return r0 * rel + r0 * motion.offset(t) * bump_dphi(phi);
}

double Star2D::radius_dt(double t, double phi) const {
  return r0 * motion.offset_rate(t) * bump(phi);
}

// --- MovingDomain ------------------------------------------------------------

MovingDomain MovingDomain::interval(double x_left, double s0, MotionLaw motion,
                                    double horizon, bool moving_endpoint) {
  if (!(s0 > x_left)) throw invalid_input("MovingDomain::interval: need s0 > x_left");
  MovingDomain d;
  d.family_ = Interval1D{x_left, s0, motion, moving_endpoint};
  d.horizon_ = horizon;
  return d;
}

MovingDomain MovingDomain::star(Eigen::Vector2d center, double r0, Vec cos_coeffs,
                                Vec sin_coeffs, MotionLaw motion, double horizon) {
  if (!(r0 > 0)) throw invalid_input("MovingDomain::star: need r0 > 0");
  MovingDomain d;
  Star2D s;
  s.center = center;
  s.r0 = r0;
  s.cos_coeffs = std::move(cos_coeffs);
  s.sin_coeffs = std::move(sin_coeffs);
  s.motion = motion;
  d.family_ = std::move(s);
  d.horizon_ = horizon;
  return d;
}

MovingDomain MovingDomain::custom(CustomFamily family, double horizon) {
  if (!family.forward || !family.backward || !family.contains)
    throw invalid_input("MovingDomain::custom: forward/backward/contains are required");
  MovingDomain d;
  d.family_ = std::move(family);
  d.horizon_ = horizon;
  return d;
}

int MovingDomain::dim() const {
  if (std::holds_alternative<Interval1D>(family_)) return 1;
  if (std::holds_alternative<Star2D>(family_)) return 2;
  return std::get<CustomFamily>(family_).dim;
}

namespace {

double angle_about(const Eigen::Vector2d& center, const Vec& x) {
  return std::atan2(x[1] - center[1], x[0] - center[0]);
}

}  // namespace

Vec MovingDomain::forward(double t, const Vec& y) const {
  if (const auto* iv = std::get_if<Interval1D>(&family_)) {
    const double scale = (iv->endpoint(t) - iv->x_left) / (iv->s0 - iv->x_left);
    Vec x(1);
    x[0] = iv->x_left + (y[0] - iv->x_left) * scale;
    return x;
  }
  if (const auto* st = std::get_if<Star2D>(&family_)) {
    const double phi = angle_about(st->center, y);
    const double scale = st->radius(t, phi) / st->radius(0.0, phi);
    return st->center + (y - st->center) * scale;
  }
  return std::get<CustomFamily>(family_).forward(t, y);
}

Vec MovingDomain::backward(double t, const Vec& x) const {
  if (const auto* iv = std::get_if<Interval1D>(&family_)) {
    const double scale = (iv->s0 - iv->x_left) / (iv->endpoint(t) - iv->x_left);
    Vec y(1);
    y[0] = iv->x_left + (x[0] - iv->x_left) * scale;
    return y;
  }
  if (const auto* st = std::get_if<Star2D>(&family_)) {
    const double phi = angle_about(st->center, x);
    const double scale = st->radius(0.0, phi) / st->radius(t, phi);
    return st->center + (x - st->center) * scale;
  }
  return std::get<CustomFamily>(family_).backward(t, x);
}

bool MovingDomain::contains(double t, const Vec& x) const {
  if (const auto* iv = std::get_if<Interval1D>(&family_))
    return x[0] > iv->x_left && x[0] < iv->endpoint(t);
  if (const auto* st = std::get_if<Star2D>(&family_)) {
    const double rho = (x - Vec(st->center)).norm();
    if (rho == 0) return true;
    return rho < st->radius(t, angle_about(st->center, x));
  }
  return std::get<CustomFamily>(family_).contains(t, x);
}

bool MovingDomain::reference_boundary_is_moving(const Vec& y) const {
  if (const auto* iv = std::get_if<Interval1D>(&family_))
    return iv->moving_endpoint && std::abs(y[0] - iv->s0) < std::abs(y[0] - iv->x_left);
  if (const auto* st = std::get_if<Star2D>(&family_))
    return Star2D::bump(angle_about(st->center, y)) > 0;
  return true;  // custom families: treat the whole boundary as unknown
}

DomainSnapshot MovingDomain::snapshot(double t, double spacing) const {
  if (!(spacing > 0)) throw invalid_input("snapshot: spacing must be positive");
  DomainSnapshot snap;
  snap.time = t;
  snap.spacing = spacing;

  if (const auto* iv = std::get_if<Interval1D>(&family_)) {
    const double s = iv->endpoint(t);
    const int n = std::max(0, static_cast<int>(std::floor((s - iv->x_left) / spacing)));
    snap.interior.resize(1, n);
    for (int i = 0; i < n; ++i) snap.interior(0, i) = iv->x_left + (i + 0.5) * spacing;
    snap.boundary.resize(1, 2);
    snap.boundary(0, 0) = iv->x_left;
    snap.boundary(0, 1) = s;
    snap.normals.resize(1, 2);
    snap.normals(0, 0) = -1.0;
    snap.normals(0, 1) = 1.0;
    snap.moving = {0, static_cast<std::uint8_t>(iv->moving_endpoint ? 1 : 0)};
    return snap;
  }

  if (const auto* st = std::get_if<Star2D>(&family_)) {
    double rmax = 0;
    const int nphi_scan = 256;
    for (int j = 0; j < nphi_scan; ++j)
      rmax = std::max(rmax, st->radius(t, 2 * kPi * j / nphi_scan));
    const Eigen::Vector2d lo = st->center.array() - (rmax + spacing);
    const int cells = static_cast<int>(std::ceil(2 * (rmax + spacing) / spacing));
    std::vector<double> xs, ys;
    xs.reserve(static_cast<std::size_t>(cells) * cells / 2);
    for (int i = 0; i < cells; ++i) {
      for (int j = 0; j < cells; ++j) {
        Vec p(2);
        p[0] = lo[0] + (i + 0.5) * spacing;
        p[1] = lo[1] + (j + 0.5) * spacing;
        if (contains(t, p)) {
          xs.push_back(p[0]);
          ys.push_back(p[1]);
        }
      }
    }
    snap.interior.resize(2, static_cast<int>(xs.size()));
    for (int i = 0; i < snap.interior.cols(); ++i) {
      snap.interior(0, i) = xs[i];
      snap.interior(1, i) = ys[i];
    }
    const int nb = std::max(16, static_cast<int>(std::ceil(2 * kPi * rmax / spacing)));
    snap.boundary.resize(2, nb);
    snap.normals.resize(2, nb);
    snap.moving.resize(nb);
    for (int j = 0; j < nb; ++j) {
      const double phi = 2 * kPi * j / nb;
      const double r = st->radius(t, phi);
      const double rp = st->radius_dphi(t, phi);
      const double c = std::cos(phi), s = std::sin(phi);
      snap.boundary(0, j) = st->center[0] + r * c;
      snap.boundary(1, j) = st->center[1] + r * s;
      // outward normal from the tangent of phi -> center + r(phi)(cos, sin)
      Eigen::Vector2d tangent(rp * c - r * s, rp * s + r * c);
      Eigen::Vector2d normal(tangent[1], -tangent[0]);
      normal.normalize();
      snap.normals.col(j) = normal;
      snap.moving[j] = Star2D::bump(phi) > 0 ? 1 : 0;
    }
    return snap;
  }

  const auto& cf = std::get<CustomFamily>(family_);
  // Custom families: lattice-scan a bounding box found from the boundary
  // callback when present, otherwise from a unit box around the origin.
  Mat bpts, bnrm;
  std::vector<std::uint8_t> bmov;
  if (cf.boundary) cf.boundary(t, spacing, bpts, bnrm, bmov);
  Vec lo = Vec::Constant(cf.dim, -1.0), hi = Vec::Constant(cf.dim, 1.0);
  if (bpts.cols() > 0) {
    lo = bpts.rowwise().minCoeff();
    hi = bpts.rowwise().maxCoeff();
  }
  std::vector<Vec> pts;
  if (cf.dim == 1) {
    for (double x = lo[0] + spacing / 2; x < hi[0]; x += spacing) {
      Vec p(1);
      p[0] = x;
      if (cf.contains(t, p)) pts.push_back(p);
    }
  } else {
    for (double x = lo[0] + spacing / 2; x < hi[0]; x += spacing)
      for (double y = lo[1] + spacing / 2; y < hi[1]; y += spacing) {
        Vec p(2);
        p[0] = x;
        p[1] = y;
        if (cf.contains(t, p)) pts.push_back(p);
      }
  }
  snap.interior.resize(cf.dim, static_cast<int>(pts.size()));
  for (int i = 0; i < snap.interior.cols(); ++i) snap.interior.col(i) = pts[i];
  snap.boundary = bpts;
  snap.normals = bnrm;
  snap.moving = bmov;
  return snap;
}

namespace {

PullbackDerivatives finite_difference_pullback(const MovingDomain& dom, double t,
                                               const Vec& y, const FdSteps& steps) {
  const int n = dom.dim();
  const Vec x = dom.forward(t, y);
  const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
  const double hg = steps.gradient * scale;
  const double hs = steps.second * scale;
  PullbackDerivatives d;
  d.grad.resize(n, n);
  d.second.resize(n, n);
  for (int i = 0; i < n; ++i) {
    Vec xp = x, xm = x;
    xp[i] += hg;
    xm[i] -= hg;
    d.grad.col(i) = (dom.backward(t, xp) - dom.backward(t, xm)) / (2 * hg);
    xp = x;
    xm = x;
    xp[i] += hs;
    xm[i] -= hs;
    d.second.col(i) =
        (dom.backward(t, xp) - 2 * dom.backward(t, x) + dom.backward(t, xm)) / (hs * hs);
  }
  const double ht = steps.time * std::max(1.0, dom.horizon());
  if (t - ht >= 0 && t + ht <= dom.horizon()) {
    d.time_deriv = (dom.backward(t + ht, x) - dom.backward(t - ht, x)) / (2 * ht);
  } else if (t - ht < 0) {
    d.time_deriv = (-3.0 * dom.backward(t, x) + 4.0 * dom.backward(t + ht, x) -
                    dom.backward(t + 2 * ht, x)) /
                   (2 * ht);
  } else {
    d.time_deriv = (3.0 * dom.backward(t, x) - 4.0 * dom.backward(t - ht, x) +
                    dom.backward(t - 2 * ht, x)) /
                   (2 * ht);
  }
  return d;
}

}  // namespace

PullbackDerivatives MovingDomain::pullback_jacobians(double t, const Vec& y) const {
  // Out-of-domain guard: tau maps the reference domain into G(t), so the
  // admissibility test is on the reference point (closure with a small
  // relative slack; boundary nodes are legitimate evaluation points).
  if (t < -1e-12 || t > horizon_ + 1e-12)
    throw domain_error("pullback_jacobians: time outside [0, horizon]");
  if (const auto* iv = std::get_if<Interval1D>(&family_)) {
    const double slack = 1e-9 * (iv->s0 - iv->x_left);
    if (y[0] < iv->x_left - slack || y[0] > iv->s0 + slack)
      throw domain_error("pullback_jacobians: reference point outside the domain");
  } else if (const auto* st = std::get_if<Star2D>(&family_)) {
    const double rho = (y - Vec(st->center)).norm();
    if (rho > 0) {
      const double r =
          st->radius(0.0, std::atan2(y[1] - st->center[1], y[0] - st->center[0]));
      if (rho > r * (1 + 1e-9))
        throw domain_error("pullback_jacobians: reference point outside the domain");
    }
  }
  if (const auto* iv = std::get_if<Interval1D>(&family_)) {
    const double len0 = iv->s0 - iv->x_left;
    const double len = iv->endpoint(t) - iv->x_left;
    if (!(len > 1e-12)) throw numerical_error("pullback_jacobians: degenerate interval");
    PullbackDerivatives d;
    d.grad = Mat::Constant(1, 1, len0 / len);
    d.second = Mat::Zero(1, 1);
    d.time_deriv = Vec::Constant(1, -(y[0] - iv->x_left) * iv->endpoint_rate(t) / len);
    return d;
  }
  PullbackDerivatives d = finite_difference_pullback(*this, t, y, FdSteps{});
  const double det = d.grad.determinant();
  if (!(std::abs(det) > 1e-10))
    throw numerical_error("pullback_jacobians: jacobian determinant below tolerance");
  return d;
}

PullbackDerivatives pullback_jacobians(const MovingDomain& family, double t, const Vec& y) {
  return family.pullback_jacobians(t, y);
}

PullbackDerivatives pullback_jacobians_fd(const MovingDomain& family, double t,
                                          const Vec& y, const FdSteps& steps) {
  return finite_difference_pullback(family, t, y, steps);
}

// --- set-distance calculus ----------------------------------------------------

double nearest_distance(const Vec& x, const Mat& cloud) {
  if (cloud.cols() == 0) throw invalid_input("nearest_distance: empty cloud");
  return (cloud.colwise() - x).colwise().norm().minCoeff();
}

namespace {

double directed_sup_distance(const Mat& from, const Mat& to) {
  double worst = 0;
  for (int i = 0; i < from.cols(); ++i)
    worst = std::max(worst, nearest_distance(from.col(i), to));
  return worst;
}

}  // namespace

double hausdorff_distance(const DomainSnapshot& a, const DomainSnapshot& b) {
  if (a.empty() || b.empty()) throw invalid_input("hausdorff_distance: empty snapshot");
  const Mat ca = a.closure_points(), cb = b.closure_points();
  return std::max(directed_sup_distance(ca, cb), directed_sup_distance(cb, ca));
}

double modified_distance(const DomainSnapshot& a, const DomainSnapshot& b) {
  if (a.boundary.cols() == 0 || b.boundary.cols() == 0)
    throw invalid_input("modified_distance: snapshots must carry boundary clouds");
  const Mat ca = a.closure_points(), cb = b.closure_points();
  return std::max(directed_sup_distance(a.boundary, cb),
                  directed_sup_distance(b.boundary, ca));
}

DomainSnapshot interior_shrink(const DomainSnapshot& g, double delta) {
  if (delta < 0) throw invalid_input("interior_shrink: delta must be nonnegative");
  DomainSnapshot out;
  out.time = g.time;
  out.spacing = g.spacing;
  if (delta == 0) {
    out.interior = g.interior;
    return out;
  }
  if (g.boundary.cols() == 0)
    throw invalid_input("interior_shrink: snapshot must carry a boundary cloud");
  std::vector<int> keep;
  for (int i = 0; i < g.interior.cols(); ++i)
    if (nearest_distance(g.interior.col(i), g.boundary) >= delta) keep.push_back(i);
  out.interior.resize(g.dim(), static_cast<int>(keep.size()));
  for (int i = 0; i < out.interior.cols(); ++i) out.interior.col(i) = g.interior.col(keep[i]);
  return out;
}

bool check_interior_ball(const DomainSnapshot& g, double interior_ball_radius) {
  if (g.boundary.cols() == 0 || g.normals.cols() != g.boundary.cols())
    throw invalid_input("check_interior_ball: boundary normals required");
  if (g.interior.cols() == 0) throw invalid_input("check_interior_ball: empty interior cloud");
  const double tol = g.tolerance();
  for (int j = 0; j < g.boundary.cols(); ++j) {
    const Vec nu = g.normals.col(j);
    if (std::abs(nu.norm() - 1.0) > 1e-6)
      throw invalid_input("check_interior_ball: normals must be unit length");
    const Vec center = g.boundary.col(j) - interior_ball_radius * nu;
    // Ball center must sit in G and clear the whole boundary by R0.
    if (nearest_distance(center, g.interior) > tol) return false;
    if (nearest_distance(center, g.boundary) < interior_ball_radius - tol) return false;
  }
  return true;
}

namespace {

// Direction samples on the unit sphere (deterministic, dimension 1 or 2).
std::vector<Vec> sphere_directions(int dim, int count) {
  std::vector<Vec> dirs;
  if (dim == 1) {
    Vec d(1);
    d[0] = 1;
    dirs.push_back(d);
    d[0] = -1;
    dirs.push_back(d);
    return dirs;
  }
  for (int j = 0; j < count; ++j) {
    Vec d(2);
    d[0] = std::cos(2 * kPi * j / count);
    d[1] = std::sin(2 * kPi * j / count);
    dirs.push_back(d);
  }
  return dirs;
}

bool ball_inside(const MovingDomain& dom, double t, const Vec& center, double radius,
                 const std::vector<Vec>& dirs) {
  if (!dom.contains(t, center)) return false;
  for (const Vec& d : dirs) {
    if (!dom.contains(t, center + radius * d)) return false;
    if (!dom.contains(t, center + 0.5 * radius * d)) return false;
  }
  return true;
}

}  // namespace

bool check_speed_bound(const MovingDomain& family, double speed_bound,
                       const SpeedBoundGrid& grid) {
  if (!(speed_bound >= 1.0)) throw invalid_input("check_speed_bound: E must be >= 1");
  const auto dirs = sphere_directions(family.dim(), grid.sphere_samples);
  std::vector<double> radii = grid.radii;
  if (radii.empty()) {
    const double base = 0.05 * std::sqrt(family.horizon());
    radii = {base, 2 * base, 4 * base};
  }
  for (int it = 1; it <= grid.time_samples; ++it) {
    const double t0 = family.horizon() * it / grid.time_samples;
    const DomainSnapshot snap =
        family.snapshot(t0, std::sqrt(family.horizon()) / grid.point_samples * 4);
    const int stride = std::max(1, static_cast<int>(snap.interior.cols()) / grid.point_samples);
    for (int i = 0; i < snap.interior.cols(); i += stride) {
      const Vec x0 = snap.interior.col(i);
      for (double radius : radii) {
        if (!ball_inside(family, t0, x0, speed_bound * radius, dirs)) continue;
        const double t_lo = std::max(t0 - radius * radius, 0.0);
        for (int k = 0; k <= grid.cylinder_time_samples; ++k) {
          const double t = t_lo + (t0 - t_lo) * k / grid.cylinder_time_samples;
          if (!ball_inside(family, t, x0, radius, dirs)) return false;
        }
      }
    }
  }
  return true;
}

bool cone_contains(const Vec& apex, const Vec& axis, double rho0, double alpha,
                   const Vec& x) {
  const double axis_norm = axis.norm();
  if (!(axis_norm > 0)) throw invalid_input("cone_contains: zero-length axis");
  const Vec r = x - apex;
  const double len = r.norm();
  if (len == 0 || len >= rho0) return false;
  return r.dot(axis) / (len * axis_norm) > std::cos(alpha);
}

DomainSnapshot lipschitz_cone(const Vec& apex, const Vec& axis, double rho0,
                              double alpha, double spacing) {
  const double axis_norm = axis.norm();
  if (!(axis_norm > 0)) throw invalid_input("lipschitz_cone: zero-length axis");
  if (!(rho0 > 0 && spacing > 0)) throw invalid_input("lipschitz_cone: bad arguments");
  const int dim = static_cast<int>(apex.size());
  DomainSnapshot snap;
  snap.time = 0;
  snap.spacing = spacing;
  std::vector<Vec> pts;
  if (dim == 1) {
    for (double x = apex[0] - rho0 + spacing / 2; x < apex[0] + rho0; x += spacing) {
      Vec p(1);
      p[0] = x;
      if (cone_contains(apex, axis, rho0, alpha, p)) pts.push_back(p);
    }
  } else {
    for (double x = apex[0] - rho0 + spacing / 2; x < apex[0] + rho0; x += spacing)
      for (double y = apex[1] - rho0 + spacing / 2; y < apex[1] + rho0; y += spacing) {
        Vec p(2);
        p[0] = x;
        p[1] = y;
        if (cone_contains(apex, axis, rho0, alpha, p)) pts.push_back(p);
      }
  }
  snap.interior.resize(dim, static_cast<int>(pts.size()));
  for (int i = 0; i < snap.interior.cols(); ++i) snap.interior.col(i) = pts[i];
  return snap;
}

}  // namespace spdelab::geometry
