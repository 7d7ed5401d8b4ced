#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "spdelab/geometry.hpp"
#include "spdelab/stochastic.hpp"

using namespace spdelab;
using namespace spdelab::geometry;

namespace {

Vec pt(double x) {
  Vec p(1);
  p[0] = x;
  return p;
}

Vec pt(double x, double y) {
  Vec p(2);
  p[0] = x;
  p[1] = y;
  return p;
}

MovingDomain unit_ball(double cx, double cy, double radius) {
  return MovingDomain::star({cx, cy}, radius, Vec(), Vec(), MotionLaw::statics(), 1.0);
}

}  // namespace

TEST_CASE("interval family: identity at t = 0 and inverse consistency") {
  const auto dom =
      MovingDomain::interval(0.0, 1.0, MotionLaw::sine(0.2, 2 * kPi), 1.0);
  for (double y = 0.05; y < 1.0; y += 0.17) {
    CHECK(dom.forward(0.0, pt(y))[0] == doctest::Approx(y).epsilon(1e-14));
    for (double t : {0.1, 0.37, 0.9}) {
      const Vec x = dom.forward(t, pt(y));
      CHECK(dom.backward(t, x)[0] == doctest::Approx(y).epsilon(1e-12));
    }
  }
}

TEST_CASE("star family: identity at t = 0, inverse consistency, C1 time sanity") {
  Vec cc(2);
  cc << 0.08, -0.05;
  const auto dom = MovingDomain::star({0.3, -0.2}, 1.0, cc, Vec(),
                                      MotionLaw::sine(0.15, kPi), 1.0);
  for (double a = 0.1; a < 2 * kPi; a += 0.7) {
    const Vec y = pt(0.3 + 0.4 * std::cos(a), -0.2 + 0.4 * std::sin(a));
    CHECK((dom.forward(0.0, y) - y).norm() < 1e-13);
    for (double t : {0.2, 0.8}) {
      const Vec x = dom.forward(t, y);
      CHECK((dom.backward(t, x) - y).norm() < 1e-11);
    }
    // bounded finite-difference time derivative of tau
    const double dt = 1e-4;
    const Vec rate = (dom.forward(0.5 + dt, y) - dom.forward(0.5 - dt, y)) / (2 * dt);
    CHECK(rate.norm() < 10.0);
  }
}

TEST_CASE("hausdorff distance: identity, offset balls, concentric balls") {
  const double h = 0.02;
  const auto ball = unit_ball(0, 0, 1.0);
  const auto snap = ball.snapshot(0.0, h);
  CHECK(hausdorff_distance(snap, snap) == 0.0);

  const auto offset = unit_ball(0.3, 0, 1.0).snapshot(0.0, h);
  CHECK(hausdorff_distance(snap, offset) == doctest::Approx(0.3).epsilon(0.15));

  const auto big = unit_ball(0, 0, 2.0).snapshot(0.0, h);
  CHECK(hausdorff_distance(snap, big) == doctest::Approx(1.0).epsilon(0.05));

  CHECK_THROWS_AS(hausdorff_distance(snap, DomainSnapshot{}), invalid_input);
}

TEST_CASE("hausdorff distance: symmetry and triangle inequality on sampled triples") {
  const double h = 0.05;
  const auto a = unit_ball(0, 0, 1.0).snapshot(0, h);
  const auto b = unit_ball(0.4, 0.1, 0.8).snapshot(0, h);
  Vec cc(2);
  cc << 0.1, 0.05;
  const auto c = MovingDomain::star({-0.2, 0.3}, 1.1, cc, Vec(), MotionLaw::statics(), 1.0)
                     .snapshot(0, h);
  const double dab = hausdorff_distance(a, b);
  const double dba = hausdorff_distance(b, a);
  const double dac = hausdorff_distance(a, c);
  const double dcb = hausdorff_distance(c, b);
  CHECK(dab == dba);
  CHECK(dab <= dac + dcb + 1e-12);
}

TEST_CASE("modified distance: concentric balls and domination by hausdorff") {
  const double h = 0.02;
  const auto small = unit_ball(0, 0, 1.0).snapshot(0, h);
  const auto big = unit_ball(0, 0, 2.0).snapshot(0, h);
  CHECK(modified_distance(small, small) == 0.0);
  CHECK(modified_distance(small, big) == doctest::Approx(1.0).epsilon(0.05));
  for (double off : {0.0, 0.2, 0.5}) {
    const auto other = unit_ball(off, -off / 2, 1.3).snapshot(0, h);
    CHECK(modified_distance(small, other) <= hausdorff_distance(small, other) + 1e-12);
  }
}

TEST_CASE("hausdorff dominates a multiple of the modified distance on small sweeps") {
  // perturbed star domains at small hausdorff distance: measure the ratio
  // d / d_m and confirm a finite constant covers the sweep (never assumed)
  const double h = 0.03;
  const auto base = unit_ball(0, 0, 1.0).snapshot(0, h);
  double worst_ratio = 0;
  int measured = 0;
  for (double bump : {0.02, 0.05, 0.08}) {
    for (double phase : {0.0, 0.7}) {
      Vec cc(2), sc(2);
      cc << bump * std::cos(phase), bump * 0.4;
      sc << bump * std::sin(phase), 0.0;
      const auto perturbed =
          MovingDomain::star({0, 0}, 1.0, cc, sc, MotionLaw::statics(), 1.0).snapshot(0, h);
      const double d = hausdorff_distance(base, perturbed);
      const double dm = modified_distance(base, perturbed);
      if (d > 0.3 || dm <= 0) continue;  // outside the small-distance regime
      worst_ratio = std::max(worst_ratio, d / dm);
      ++measured;
    }
  }
  CHECK(measured >= 4);
  CHECK(worst_ratio >= 1.0);   // d >= d_m always
  CHECK(worst_ratio < 10.0);   // an empirical C covers the sweep
}

TEST_CASE("interior shrink: balls, emptiness, antitone in delta") {
  const double h = 0.02;
  const auto ball = unit_ball(0, 0, 1.0).snapshot(0, h);
  const auto same = interior_shrink(ball, 0.0);
  CHECK(same.interior.cols() == ball.interior.cols());

  const auto shrunk = interior_shrink(ball, 0.25);
  const auto direct = unit_ball(0, 0, 0.75).snapshot(0, h);
  // compare interiors only (shrunk snapshots carry no boundary cloud)
  double worst = 0;
  for (int i = 0; i < shrunk.interior.cols(); ++i)
    worst = std::max(worst, nearest_distance(shrunk.interior.col(i), direct.interior));
  for (int i = 0; i < direct.interior.cols(); ++i)
    worst = std::max(worst, nearest_distance(direct.interior.col(i), shrunk.interior));
  CHECK(worst < 3 * h);

  CHECK(interior_shrink(ball, 1.5).interior.cols() == 0);

  const auto s1 = interior_shrink(ball, 0.2);
  const auto s2 = interior_shrink(ball, 0.4);
  CHECK(s2.interior.cols() <= s1.interior.cols());
  for (int i = 0; i < s2.interior.cols(); ++i)
    CHECK(nearest_distance(s2.interior.col(i), s1.interior) < 1e-12);
}

TEST_CASE("interior ball check: balls pass their own radius, fail beyond") {
  const double h = 0.02;
  const auto snap = unit_ball(0, 0, 1.0).snapshot(0, h);
  CHECK(check_interior_ball(snap, 0.5));
  CHECK_FALSE(check_interior_ball(snap, 1.5));
}

TEST_CASE("interior ball check: L-shaped domain fails at corner samples") {
  // [0,2]^2 minus the [1,2]x[1,2] notch, sampled by hand with bisector
  // normals at the corners.
  DomainSnapshot l;
  l.time = 0;
  l.spacing = 0.05;
  std::vector<Vec> interior, boundary, normals;
  for (double x = 0.025; x < 2; x += 0.05)
    for (double y = 0.025; y < 2; y += 0.05)
      if (!(x > 1 && y > 1)) interior.push_back(pt(x, y));
  auto edge = [&](Vec a, Vec b, Vec nu) {
    const int n = 40;
    for (int i = 0; i <= n; ++i) {
      boundary.push_back(a + (b - a) * (static_cast<double>(i) / n));
      normals.push_back(nu);
    }
  };
  edge(pt(0, 0), pt(2, 0), pt(0, -1));
  edge(pt(2, 0), pt(2, 1), pt(1, 0));
  edge(pt(2, 1), pt(1, 1), pt(0, 1));
  edge(pt(1, 1), pt(1, 2), pt(1, 0));
  edge(pt(1, 2), pt(0, 2), pt(0, 1));
  edge(pt(0, 2), pt(0, 0), pt(-1, 0));
  // convex corner sample with bisector normal
  boundary.push_back(pt(0, 0));
  normals.push_back(pt(-std::sqrt(0.5), -std::sqrt(0.5)));
  l.interior.resize(2, static_cast<int>(interior.size()));
  for (std::size_t i = 0; i < interior.size(); ++i) l.interior.col(i) = interior[i];
  l.boundary.resize(2, static_cast<int>(boundary.size()));
  l.normals.resize(2, static_cast<int>(boundary.size()));
  for (std::size_t i = 0; i < boundary.size(); ++i) {
    l.boundary.col(i) = boundary[i];
    l.normals.col(i) = normals[i];
  }
  l.moving.assign(boundary.size(), 0);
  CHECK_FALSE(check_interior_ball(l, 0.5));
}

TEST_CASE("speed bound: static domains pass for any E") {
  const auto dom = MovingDomain::interval(0.0, 1.0, MotionLaw::statics(), 1.0);
  SpeedBoundGrid grid;
  grid.radii = {0.05, 0.1, 0.2};
  CHECK(check_speed_bound(dom, 1.0, grid));
  CHECK(check_speed_bound(dom, 4.0, grid));
}

TEST_CASE("speed bound: first passing E grows with the expansion rate") {
  SpeedBoundGrid grid;
  grid.radii = {0.1, 0.2, 0.3};
  grid.time_samples = 10;
  auto first_passing = [&](double rate) {
    const auto dom = MovingDomain::interval(0.0, 1.0, MotionLaw::linear(rate), 1.0);
    for (double e : {1.0, 1.05, 1.1, 1.2, 1.4, 1.8, 2.6}) {
      if (check_speed_bound(dom, e, grid)) return e;
    }
    return 1e9;
  };
  const double e_slow = first_passing(0.3);
  const double e_fast = first_passing(1.5);
  CHECK(e_slow <= e_fast);
  CHECK(e_fast > 1.0);
  CHECK(e_fast < 1e9);
}

TEST_CASE("speed bound: jump discontinuity fails for all tested E") {
  const auto dom = MovingDomain::interval(0.0, 1.0, MotionLaw::jump(0.5, 0.5), 1.0);
  SpeedBoundGrid grid;
  grid.radii = {0.05, 0.1, 0.15};
  grid.time_samples = 20;
  for (double e : {1.0, 1.5, 2.0}) CHECK_FALSE(check_speed_bound(dom, e, grid));
}

TEST_CASE("lipschitz cone: membership against a brute-force angle oracle") {
  const Vec apex = pt(0.2, -0.1);
  Vec axis = pt(0.6, 0.8);  // unit
  const double rho0 = 0.5, alpha = kPi / 5;
  for (int i = 0; i < 1000; ++i) {
    const double u1 = stochastic::uniform_draw(31, 0, i);
    const double u2 = stochastic::uniform_draw(31, 1, i);
    const Vec x = pt(apex[0] + (2 * u1 - 1) * rho0, apex[1] + (2 * u2 - 1) * rho0);
    const Vec d = x - apex;
    const bool oracle = d.norm() > 0 && d.norm() < rho0 &&
                        d.dot(axis) / d.norm() > std::cos(alpha);
    CHECK(cone_contains(apex, axis, rho0, alpha, x) == oracle);
  }
  // axis midpoint is always a member
  CHECK(cone_contains(apex, axis, rho0, alpha, Vec(apex + 0.5 * rho0 * axis)));
  CHECK_THROWS_AS(cone_contains(apex, pt(0, 0), rho0, alpha, apex), invalid_input);
}

TEST_CASE("lipschitz cone: aperture pi/4 sits strictly inside the half-ball") {
  const Vec apex = pt(0.0, 0.0);
  const Vec axis = pt(1.0, 0.0);
  const auto cone = lipschitz_cone(apex, axis, 0.4, kPi / 4, 0.01);
  CHECK(cone.interior.cols() > 0);
  for (int i = 0; i < cone.interior.cols(); ++i) {
    const Vec x = cone.interior.col(i);
    CHECK((x - apex).norm() < 0.4);    // inside the ball
    CHECK((x - apex).dot(axis) > 0.0);  // inside the half-space
  }
}

TEST_CASE("interior-ball domains admit lipschitz cones at boundary points") {
  const auto dom = unit_ball(0, 0, 1.0);
  const auto snap = dom.snapshot(0, 0.02);
  const double rho0 = 0.3, alpha = kPi / 5;  // rho0 < R0 = 1, alpha < pi/4
  for (int j = 0; j < snap.boundary.cols(); j += 37) {
    const Vec x0 = snap.boundary.col(j);
    const Vec axis = -snap.normals.col(j);
    const auto cone = lipschitz_cone(x0, axis, rho0, alpha, 0.03);
    for (int i = 0; i < cone.interior.cols(); ++i)
      CHECK(dom.contains(0.0, cone.interior.col(i)));
  }
}

TEST_CASE("pullback jacobians: identity family") {
  const auto dom = MovingDomain::interval(0.0, 1.0, MotionLaw::statics(), 1.0);
  const auto d = pullback_jacobians(dom, 0.4, pt(0.3));
  CHECK(d.grad(0, 0) == doctest::Approx(1.0));
  CHECK(d.second(0, 0) == doctest::Approx(0.0));
  CHECK(d.time_deriv[0] == doctest::Approx(0.0));
}

TEST_CASE("pullback jacobians reject points outside the space-time domain") {
  const auto dom = MovingDomain::interval(0.0, 1.0, MotionLaw::linear(-0.3), 1.0);
  CHECK_THROWS_AS(pullback_jacobians(dom, 1.0, pt(1.2)), spdelab::domain_error);
  CHECK_THROWS_AS(pullback_jacobians(dom, 1.8, pt(0.5)), spdelab::domain_error);
  CHECK_NOTHROW(pullback_jacobians(dom, 1.0, pt(0.9)));
}

TEST_CASE("pullback jacobians: uniform dilation has gradient I/(1+t)") {
  CustomFamily fam;
  fam.dim = 2;
  fam.forward = [](double t, const Vec& y) { return Vec((1 + t) * y); };
  fam.backward = [](double t, const Vec& x) { return Vec(x / (1 + t)); };
  fam.contains = [](double t, const Vec& x) { return x.norm() < 1 + t; };
  const auto dom = MovingDomain::custom(fam, 1.0);
  const auto d = pullback_jacobians(dom, 0.5, pt(0.2, -0.3));
  CHECK(d.grad(0, 0) == doctest::Approx(1 / 1.5).epsilon(1e-7));
  CHECK(d.grad(1, 1) == doctest::Approx(1 / 1.5).epsilon(1e-7));
  CHECK(std::abs(d.grad(0, 1)) < 1e-7);
  CHECK(std::abs(d.second(0, 0)) < 1e-5);
  // d rho/dt = -x/(1+t)^2
  CHECK(d.time_deriv[0] == doctest::Approx(-0.2 * 1.5 / sq(1.5)).epsilon(1e-5));
}

TEST_CASE("pullback jacobians: interval analytic form matches the dilation") {
  const auto dom = MovingDomain::interval(0.0, 1.0, MotionLaw::linear(1.0), 1.0);
  const double t = 0.5;
  const auto d = pullback_jacobians(dom, t, pt(0.4));
  CHECK(d.grad(0, 0) == doctest::Approx(1.0 / (1 + t)));
  CHECK(d.time_deriv[0] == doctest::Approx(-0.4 / (1 + t)));
}

TEST_CASE("pullback jacobians: Richardson halving on a smooth nonradial family") {
  CustomFamily fam;
  fam.dim = 2;
  // smooth shear + stretch, invertible on the test window
  fam.forward = [](double t, const Vec& y) {
    Vec x(2);
    x[0] = y[0] * (1 + 0.3 * t) + 0.1 * t * y[1] * y[1];
    x[1] = y[1] * (1 + 0.2 * t * y[0]);
    return x;
  };
  fam.backward = [](double t, const Vec& x) {
    // fixed-point inversion (the forward map is a mild perturbation of id)
    Vec y = x;
    for (int it = 0; it < 60; ++it) {
      Vec f(2);
      f[0] = y[0] * (1 + 0.3 * t) + 0.1 * t * y[1] * y[1];
      f[1] = y[1] * (1 + 0.2 * t * y[0]);
      y += 0.8 * (x - f);
    }
    return y;
  };
  fam.contains = [](double, const Vec& x) { return x.norm() < 2.0; };
  const auto dom = MovingDomain::custom(fam, 1.0);
  const Vec y = pt(0.3, 0.2);
  const double t = 0.4;
  FdSteps coarse, fine;
  coarse.gradient = 2e-3;
  coarse.second = 2e-2;
  coarse.time = 2e-3;
  fine.gradient = 1e-3;
  fine.second = 1e-2;
  fine.time = 1e-3;
  const auto dc = pullback_jacobians_fd(dom, t, y, coarse);
  const auto df = pullback_jacobians_fd(dom, t, y, fine);
  FdSteps tiny;  // reference
  const auto dr = pullback_jacobians_fd(dom, t, y, tiny);
  // halving the step shrinks the error by about 4 (second order)
  const double ec = (dc.grad - dr.grad).norm() + (dc.time_deriv - dr.time_deriv).norm();
  const double ef = (df.grad - dr.grad).norm() + (df.time_deriv - dr.time_deriv).norm();
  CHECK(ef < ec / 2.5);
  // composed with the forward map, gradients invert each other
  const Mat forward_grad = dr.grad.inverse();
  CHECK((dr.grad * forward_grad - Mat::Identity(2, 2)).norm() < 1e-9);
}

TEST_CASE("snapshot CSV export lists interior and boundary rows") {
  const auto dom = MovingDomain::interval(0.0, 1.0, MotionLaw::statics(), 1.0);
  const auto snap = dom.snapshot(0.5, 0.25);
  const std::string csv = snapshot_csv(snap);
  CHECK(csv.rfind("x,boundary,moving,nx\n", 0) == 0);
  const auto rows = std::count(csv.begin(), csv.end(), '\n');
  CHECK(rows == 1 + snap.interior.cols() + snap.boundary.cols());
  CHECK(csv.find(",1,1,") != std::string::npos);  // the moving endpoint row
}

TEST_CASE("geometry params validation") {
  GeometryParams g;
  CHECK_NOTHROW(g.validate());
  g.two_sphere_ratio = 0.5;  // above 1/e
  CHECK_THROWS_AS(g.validate(), invalid_input);
  g = GeometryParams{};
  g.cone_aperture = 1.0;  // above pi/4
  CHECK_THROWS_AS(g.validate(), invalid_input);
  g = GeometryParams{};
  g.speed_bound = 0.5;
  CHECK_THROWS_AS(g.validate(), invalid_input);
}

TEST_CASE("snapshot normals have unit length") {
  Vec cc(2);
  cc << 0.1, 0.0;
  const auto dom = MovingDomain::star({0, 0}, 1.0, cc, Vec(), MotionLaw::sine(0.1, kPi), 1.0);
  const auto snap = dom.snapshot(0.6, 0.05);
  for (int j = 0; j < snap.normals.cols(); ++j)
    CHECK(snap.normals.col(j).norm() == doctest::Approx(1.0).epsilon(1e-9));
  // moving flag marks the upper half only
  bool any_moving = false, any_fixed = false;
  for (auto m : snap.moving) (m ? any_moving : any_fixed) = true;
  CHECK(any_moving);
  CHECK(any_fixed);
}
