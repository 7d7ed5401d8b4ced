#include <doctest.h>

#include <cmath>

#include "spdelab/verify.hpp"

using namespace spdelab;
using namespace spdelab::verify;
using geometry::GeometryParams;
using geometry::MotionLaw;
using geometry::MovingDomain;
using solver::EnsembleField;
using solver::ManufacturedSolution;
using solver::ScalarField;
using solver::SPDECoefficients;
using solver::SpatialGrid;
using weights::CarlemanWeights;

namespace {

Vec pt(double x) {
  Vec p(1);
  p[0] = x;
  return p;
}

CarlemanWeights weights_for(double t0, double x0, double lambda, double a = 0.01,
                            double b = 0.3) {
  CarlemanWeights w;
  w.focal_time = t0;
  w.focal_point = pt(x0);
  w.time_shift = a;
  w.lookback = b;
  w.strength = lambda;
  w.sigma = weights::shared_sigma_table();
  return w;
}

EnsembleField heat_ensemble(double noise, std::uint64_t seed, int paths, int cells = 192,
                            int steps = 512, double bump_center = 0.5) {
  const auto dom = MovingDomain::interval(0.0, 1.0, MotionLaw::statics(), 1.0);
  const auto grid = SpatialGrid::interval(dom, cells);
  SPDECoefficients c;
  c.noise_intensity = ScalarField::constant(noise);
  c.initial_data = [bump_center](const Vec& y) {
    return std::exp(-sq(y[0] - bump_center) / 0.02) + 0.4 * std::sin(kPi * y[0]);
  };
  c.finalize();
  const auto times = stochastic::uniform_time_grid(1.0, steps);
  const auto ens = stochastic::generate_paths(seed, paths, times);
  solver::SolveOptions opt;
  opt.slice_stride = 8;
  return solver::solve(dom, c, ens, grid, opt);
}

}  // namespace

TEST_CASE("fit_line recovers exact affine data") {
  Vec x(5), y(5);
  for (int i = 0; i < 5; ++i) {
    x[i] = i;
    y[i] = 3.0 - 2.0 * i;
  }
  const auto f = fit_line(x, y);
  CHECK(f.slope == doctest::Approx(-2.0));
  CHECK(f.intercept == doctest::Approx(3.0));
  CHECK(f.slope_stderr == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("carleman margin: zero solution gives zero everything") {
  const auto dom = MovingDomain::interval(0.0, 1.0, MotionLaw::statics(), 1.0);
  ManufacturedSolution zero;
  zero.name = "zero";
  zero.stochastic = false;
  zero.value = [](double, const Vec&, double) { return 0.0; };
  zero.gradient = [](double, const Vec&, double) { return Vec::Zero(1); };
  zero.drift_source = [](double, const Vec&, double) { return 0.0; };
  zero.noise_source = [](double, const Vec&, double) { return 0.0; };
  zero.noise_source_gradient = [](double, const Vec&, double) { return Vec::Zero(1); };
  const auto rep = carleman_residual(zero, dom, weights_for(0.5, 0.4, 2.0));
  CHECK(rep.lhs() == 0.0);
  CHECK(rep.rhs() == 0.0);
  CHECK(rep.margin == 0.0);
}

TEST_CASE("carleman margin is nonnegative for the deterministic corpus") {
  const auto stat = MovingDomain::interval(0.0, 1.0, MotionLaw::statics(), 1.0);
  const auto moving = MovingDomain::interval(0.0, 1.0, MotionLaw::sine(0.15, kPi), 1.0);
  std::vector<std::pair<MovingDomain, ManufacturedSolution>> corpus;
  corpus.emplace_back(stat, solver::eigenmode_solution(stat, 1, kPi * kPi));
  corpus.emplace_back(moving, solver::eigenmode_solution(moving, 2, 5.0));
  corpus.emplace_back(moving, solver::advected_bump_solution(moving, 0.45, 0.2));
  ResidualGrid grid;
  grid.cells = 256;
  grid.time_steps = 256;
  for (const auto& [dom, solution] : corpus) {
    for (double lambda : {1.0, 4.0, 16.0}) {
      const auto rep = carleman_residual(solution, dom, weights_for(0.5, 0.45, lambda), grid);
      INFO(solution.name, " lambda=", lambda);
      CHECK(rep.margin >= 0.0);
      CHECK(rep.lhs() >= 0.0);
      CHECK(std::isfinite(rep.rhs()));
    }
  }
}

TEST_CASE("carleman margin for the stochastic profile stays above -3 sigma") {
  const auto stat = MovingDomain::interval(0.0, 1.0, MotionLaw::statics(), 1.0);
  const auto gbm = solver::geometric_brownian_solution(stat, 0.5);
  // ensemble over [0, t0] aligned with the quadrature window
  const double t0 = 0.5, b = 0.25;
  const auto times = stochastic::uniform_time_grid(t0, 320);
  const auto ens = stochastic::generate_paths(17, 96, times);
  ResidualGrid grid;
  grid.cells = 192;
  for (double lambda : {1.0, 8.0}) {
    const auto rep =
        carleman_residual(gbm, stat, weights_for(t0, 0.5, lambda, 0.01, b), grid, &ens);
    CHECK(rep.paths == 96);
    CHECK(rep.margin >= -3.0 * rep.margin_stderr);
    CHECK(rep.n_noise_mass > 0.0);
  }
}

TEST_CASE("carleman per-term integrals match closed-form oracles") {
  // static heat mode: u = e^{-pi^2 t} sin(pi x), g1 = g2 = 0. The focal-mass
  // and boundary-flux addends have closed forms up to 1-D quadrature, which
  // pins their scale and sign independently of the margin check.
  const auto dom = MovingDomain::interval(0.0, 1.0, MotionLaw::statics(), 1.0);
  const auto mode = solver::eigenmode_solution(dom, 1, kPi * kPi);
  const double t0 = 0.5, a = 0.01, b = 0.25, lambda = 1.0, x0 = 0.45;
  ResidualGrid grid;
  grid.cells = 512;
  grid.time_steps = 512;
  const auto rep = carleman_residual(mode, dom, weights_for(t0, x0, lambda, a, b), grid);

  const auto table = weights::shared_sigma_table();
  const double c0 = table->bounds_constant();

  // focal mass: a lambda e^{C0} sigma(a)^{-2 lambda} int u(t0)^2
  double mass_t0 = 0;
  const int nq = 200000;
  for (int i = 0; i < nq; ++i) {
    const double x = (i + 0.5) / nq;
    mass_t0 += sq(std::exp(-kPi * kPi * t0) * std::sin(kPi * x)) / nq;
  }
  const double focal_oracle =
      a * lambda * std::exp(c0) * std::pow(table->value(a), -2 * lambda) * mass_t0;
  CHECK(rep.m_focal_mass == doctest::Approx(focal_oracle).epsilon(1e-4));

  // boundary flux: -int (x-x0).nu e^{2 phi} (du/dn)^2 over both endpoints;
  // du/dn = -pi e^{-pi^2 t} at x = 0 and +pi e^{-pi^2 t}... the squared
  // normal derivative is pi^2 e^{-2 pi^2 t} at both ends.
  double flux_oracle = 0;
  const int nt = 200000;
  for (int j = 0; j < nt; ++j) {
    const double t = t0 - b + b * (j + 0.5) / nt;
    const double s = t0 - t + a;
    const double du2 = sq(kPi * std::exp(-kPi * kPi * t));
    for (double xb : {0.0, 1.0}) {
      const double nu = xb == 0.0 ? -1.0 : 1.0;
      const double phi_b = -sq(xb - x0) / (8 * s) - lambda * std::log(table->value(s));
      flux_oracle -= (xb - x0) * nu * std::exp(2 * phi_b) * du2 * (b / nt);
    }
  }
  // one-sided differences under-resolve the normal derivative at first order
  CHECK(rep.m_boundary_flux == doctest::Approx(flux_oracle).epsilon(0.02));
  CHECK(rep.m_boundary_flux < 0.0);  // interior focal point: (x-x0).nu > 0
  // g1 = 0 exactly for the pure heat mode
  CHECK(std::abs(rep.rhs_source) < 1e-20);
}

TEST_CASE("carleman rejects hypothesis violations") {
  const auto dom = MovingDomain::interval(0.0, 1.0, MotionLaw::statics(), 1.0);
  ManufacturedSolution bad;
  bad.name = "nonvanishing";
  bad.stochastic = false;
  bad.value = [](double, const Vec& x, double) { return std::cos(kPi * x[0]); };
  bad.gradient = [](double, const Vec& x, double) {
    Vec g(1);
    g[0] = -kPi * std::sin(kPi * x[0]);
    return g;
  };
  bad.drift_source = [](double, const Vec& x, double) {
    return kPi * kPi * std::cos(kPi * x[0]);
  };
  bad.noise_source = [](double, const Vec&, double) { return 0.0; };
  bad.noise_source_gradient = [](double, const Vec&, double) { return Vec::Zero(1); };
  CHECK_THROWS_AS(carleman_residual(bad, dom, weights_for(0.5, 0.4, 2.0)), invalid_input);

  // window violations surface through the weight validation
  auto w = weights_for(0.5, 0.4, 2.0);
  w.lookback = 0.7;  // b > t0
  const auto good = solver::eigenmode_solution(dom, 1, kPi * kPi);
  CHECK_THROWS_AS(carleman_residual(good, dom, w), invalid_input);
}

TEST_CASE("two-sphere: exponent arithmetic and monotonicity of the bound") {
  TwoSphereFit fit;
  fit.c_mult = 2.0;
  fit.c_exp = 1.0;
  TwoSphereParams p;
  p.small_radius = 0.05;
  p.large_radius = std::exp(1.0) * 0.05;  // R = e r with C_exp = 1 gives theta = 1
  p.middle_radius = 0.1;
  CHECK(fit.theta(p) == doctest::Approx(1.0));

  // E^{1-theta} eps^theta is monotone in both arguments
  TwoSphereReport r;
  r.params = p;
  r.params.middle_radius = 0.1;
  r.local = {0.02, 0.0};
  r.energy = {0.5, 0.0};
  fit.c_exp = 2.0;
  const double base = fit.bound(r);
  auto bumped = r;
  bumped.local.value = 0.03;
  CHECK(fit.bound(bumped) > base);
  bumped = r;
  bumped.energy.value = 0.6;
  CHECK(fit.bound(bumped) > base);
}

TEST_CASE("two-sphere sweep: fit on training data validates on held-out triples") {
  GeometryParams g;
  g.interior_ball_radius = 0.45;
  g.two_sphere_ratio = 0.25;
  const auto field = heat_ensemble(0.25, 71, 64);
  const double cap = 1.0 / std::sqrt(2 * std::exp(1.0));

  std::vector<TwoSphereReport> train, holdout;
  int idx = 0;
  for (double t0 : {0.36, 0.64, 1.0}) {
    for (double R : {0.3, 0.38}) {
      for (double r : {0.02, 0.045}) {
        TwoSphereParams p;
        p.focal_time = t0;
        p.center = pt(0.5);
        p.large_radius = std::min(R, cap);
        p.middle_radius = g.two_sphere_ratio * p.large_radius;
        p.small_radius = r;
        p.clipped = false;
        p.validate(g);
        const auto rep = measure_two_sphere(field, p);
        ((idx++ % 3 == 2) ? holdout : train).push_back(rep);
      }
    }
  }
  REQUIRE(train.size() >= 6);
  REQUIRE(holdout.size() >= 3);
  const auto fit = two_sphere_fit(train);
  CHECK(fit.c_mult > 0);
  CHECK(fit.used_reports >= 6);
  const auto validation = two_sphere_validate(fit, holdout);
  CHECK(validation.checked >= 3);
  CHECK(validation.violations == 0);

  // insufficient data is an error
  std::vector<TwoSphereReport> two(train.begin(), train.begin() + 2);
  CHECK_THROWS_AS(two_sphere_fit(two), invalid_input);
}

TEST_CASE("two-sphere: clipped zero-initial variant at early focal times") {
  // u0 = 0, boundary-driven: the time window clips at 0 when t0 < R^2
  const auto dom = MovingDomain::interval(0.0, 1.0, MotionLaw::statics(), 0.3);
  const auto grid = SpatialGrid::interval(dom, 192);
  SPDECoefficients c;
  c.noise_intensity = ScalarField::constant(0.2);
  c.boundary_data = ScalarField::constant(1.0);
  c.boundary_floor = 0.9;
  c.initial_data = [](const Vec&) { return 0.0; };
  c.finalize();
  const auto times = stochastic::uniform_time_grid(0.3, 256);
  const auto ens = stochastic::generate_paths(55, 48, times);
  solver::SolveOptions opt;
  opt.slice_stride = 4;
  const auto field = solver::solve(dom, c, ens, grid, opt);

  GeometryParams g;
  g.interior_ball_radius = 0.45;
  g.two_sphere_ratio = 0.25;
  std::vector<TwoSphereReport> sweep;
  for (double t0 : {0.06, 0.1})  // both below R^2 = 0.09..0.14: genuine clipping
    for (double R : {0.3, 0.38})
      for (double r : {0.02, 0.04}) {
        TwoSphereParams p;
        p.focal_time = t0;
        p.center = pt(0.35);
        p.large_radius = R;
        p.middle_radius = g.two_sphere_ratio * R;
        p.small_radius = r;
        p.clipped = true;
        p.validate(g);  // the clipped regime drops the sqrt(t0) cap
        const auto rep = measure_two_sphere(field, p);
        CHECK(rep.energy.value > 0);
        CHECK(std::isfinite(rep.local.value));
        sweep.push_back(rep);
      }
  const auto fit = two_sphere_fit(sweep);
  CHECK(fit.c_mult > 0);
  const auto validation = two_sphere_validate(fit, sweep);
  CHECK(validation.violations == 0);
}

TEST_CASE("two-sphere measurements are dimension-generic (2-D disk)") {
  const auto disk = MovingDomain::star({0, 0}, 1.0, Vec(), Vec(), MotionLaw::statics(), 0.5);
  const auto grid = solver::SpatialGrid::embedded(disk, 28);
  SPDECoefficients c;
  c.noise_intensity = ScalarField::constant(0.2);
  c.initial_data = [](const Vec& y) { return std::max(0.0, 1.0 - 2 * y.squaredNorm()); };
  c.finalize();
  const auto times = stochastic::uniform_time_grid(0.5, 128);
  const auto ens = stochastic::generate_paths(321, 24, times);
  solver::SolveOptions opt;
  opt.slice_stride = 4;
  const auto field = solver::solve(disk, c, ens, grid, opt);
  TwoSphereParams p;
  p.focal_time = 0.25;
  p.center = Vec::Zero(2);
  p.large_radius = 0.4;
  p.middle_radius = 0.1;
  p.small_radius = 0.04;
  const auto rep = measure_two_sphere(field, p);
  CHECK(rep.local.value > 0);
  CHECK(rep.middle.value > rep.local.value);  // nested balls, positive field mass
  CHECK(rep.energy.value > 0);
}

TEST_CASE("two-sphere measurement near the moving boundary truncates gracefully") {
  // focal point close to the moving endpoint: the ball-domain intersection
  // clips the integrals; estimates stay finite, ordered, and positive
  const auto dom = MovingDomain::interval(0.0, 1.0, MotionLaw::sine(-0.1, kPi), 1.0);
  const auto grid = solver::SpatialGrid::interval(dom, 192);
  SPDECoefficients c;
  c.noise_intensity = ScalarField::constant(0.2);
  c.boundary_data = ScalarField::constant(1.0);
  c.initial_data = [](const Vec&) { return 0.0; };
  c.finalize();
  const auto ens = stochastic::generate_paths(91, 32, stochastic::uniform_time_grid(1.0, 256));
  solver::SolveOptions opt;
  opt.slice_stride = 8;
  const auto field = solver::solve(dom, c, ens, grid, opt);
  const double t0 = 1.0;
  const double endpoint = dom.as_interval()->endpoint(t0);
  TwoSphereParams p;
  p.focal_time = t0;
  p.center = pt(endpoint - 0.05);  // B_R pokes past the boundary
  p.large_radius = 0.3;
  p.middle_radius = 0.075;
  p.small_radius = 0.03;
  const auto rep = measure_two_sphere(field, p);
  CHECK(rep.local.value > 0);
  CHECK(std::isfinite(rep.middle.value));
  CHECK(rep.middle.value >= rep.local.value);  // nested integration regions
  CHECK(rep.energy.value > 0);
}

TEST_CASE("two-sphere fit excludes reports at the noise floor") {
  // zero fields produce 0 <= 0 reports that carry no information; the fit
  // must refuse to run on them alone
  const auto field0 = heat_ensemble(0.0, 5, 2, 64, 64);
  auto zeroed = field0;
  for (auto& s : zeroed.slices) s.setZero();
  GeometryParams g;
  g.interior_ball_radius = 0.45;
  g.two_sphere_ratio = 0.25;
  std::vector<TwoSphereReport> sweep;
  for (double r : {0.02, 0.03, 0.04, 0.05}) {
    TwoSphereParams p;
    p.focal_time = 1.0;
    p.center = pt(0.5);
    p.large_radius = 0.3;
    p.middle_radius = 0.075;
    p.small_radius = r;
    sweep.push_back(measure_two_sphere(zeroed, p));
  }
  CHECK_THROWS_AS(two_sphere_fit(sweep), invalid_input);
}

TEST_CASE("sucp probe: volume scaling slopes and the inconclusive flag") {
  // synthetic slices: constant field -> slope n; linear field -> slope n + 2
  const auto dom = MovingDomain::interval(0.0, 1.0, MotionLaw::statics(), 1.0);
  const auto grid = SpatialGrid::interval(dom, 1024);
  auto make_field = [&](auto fn) {
    EnsembleField f;
    f.domain = dom;
    f.grid = grid;
    f.paths = 1;
    f.base_seed = 0;
    f.time_grid = stochastic::uniform_time_grid(1.0, 2);
    f.slice_times = {1.0};
    f.slice_steps = {2};
    Mat s(grid.node_count(), 1);
    for (int i = 0; i < grid.node_count(); ++i) s(i, 0) = fn(grid.node(i)[0]);
    f.slices = {s};
    return f;
  };
  const std::vector<double> radii = {0.2, 0.14, 0.1, 0.07, 0.05};

  const auto flat = make_field([](double) { return 1.0; });
  const auto rep_flat = sucp_probe(flat, 1.0, pt(0.5), radii);
  CHECK(rep_flat.conclusive);
  CHECK(rep_flat.slope == doctest::Approx(1.0).epsilon(0.05));
  CHECK(rep_flat.vanishing_order == doctest::Approx(0.0).epsilon(0.2));

  const auto linear = make_field([](double x) { return x - 0.5; });
  const auto rep_lin = sucp_probe(linear, 1.0, pt(0.5), radii);
  CHECK(rep_lin.conclusive);
  CHECK(rep_lin.slope == doctest::Approx(3.0).epsilon(0.05));
  CHECK(rep_lin.vanishing_order == doctest::Approx(1.0).epsilon(0.1));

  const auto zero = make_field([](double) { return 0.0; });
  CHECK_FALSE(sucp_probe(zero, 1.0, pt(0.5), radii).conclusive);
}

TEST_CASE("iteration lemma: worked example and the exact-arithmetic sweep") {
  // n = 1: the bound reduces to C1^{1/(1-s)} x1 >= x1
  IterationState st{0.37, 2.0, 0.5, 1};
  CHECK(geometric_iteration_bound(st) >= st.x1);

  // C1 = 2, s = 1/2, x1 = 1/16, n = 3: unrolled recursion sqrt(2), bound 2
  st = IterationState{1.0 / 16, 2.0, 0.5, 3};
  const double bound = geometric_iteration_bound(st);
  CHECK(bound == doctest::Approx(2.0));
  double unrolled = st.x1;
  for (int k = 2; k <= st.n; ++k) unrolled = st.c1 * std::pow(unrolled, st.s);
  CHECK(unrolled == doctest::Approx(std::sqrt(2.0)));
  CHECK(bound >= unrolled);

  // exact-arithmetic dominance on random rational draws
  int checked = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto u = [&](int k) { return stochastic::uniform_draw(555, k, i); };
    const long long qs = 2 + static_cast<long long>(u(0) * 14);       // 2..15
    const long long ps = 1 + static_cast<long long>(u(1) * (qs - 1)); // 1..qs-1
    const long long qc = 1 + static_cast<long long>(u(2) * 9);
    const long long pc = qc + 1 + static_cast<long long>(u(3) * 20);  // C1 > 1
    const long long qx = 1 + static_cast<long long>(u(4) * 9);
    const long long px = 1 + static_cast<long long>(u(5) * 9);
    const int n = 1 + static_cast<int>(u(6) * 29);
    CHECK(iteration_bound_dominates_exact(px, qx, pc, qc, ps, qs, n));
    // double-precision cross-check of the same draw
    IterationState ds{static_cast<double>(px) / qx, static_cast<double>(pc) / qc,
                      static_cast<double>(ps) / qs, n};
    double rec = ds.x1;
    for (int k = 2; k <= n; ++k) rec = ds.c1 * std::pow(rec, ds.s);
    CHECK(geometric_iteration_bound(ds) >= rec * (1 - 1e-9));
    ++checked;
  }
  CHECK(checked == 10000);

  CHECK_THROWS_AS(geometric_iteration_bound(IterationState{1.0, 0.5, 0.5, 2}), invalid_input);
  CHECK_THROWS_AS(iteration_bound_dominates_exact(1, 1, 1, 2, 1, 2, 3), invalid_input);
}

TEST_CASE("cone chain: contraction in (0,1), nesting, k-bar bracket") {
  GeometryParams g;
  g.cone_radius = 0.2;
  g.cone_aperture = kPi / 6;
  g.speed_bound = 1.0;
  g.two_sphere_ratio = 0.3;
  const auto chain = cone_chain_build(pt(0.0), pt(1.0), g, 1e-3);
  CHECK(chain.contraction > 0);
  CHECK(chain.contraction < 1);
  CHECK(cone_chain_nesting_ok(chain));
  CHECK(cone_chain_kbar_in_bracket(chain));
  // bracket endpoints computed directly
  const double l = (std::log(1e-3) - std::log(chain.mu1 - chain.rho1)) /
                   std::log(chain.contraction);
  CHECK(chain.k_bar >= l + 1 - 1e-9);
  CHECK(chain.k_bar <= l + 2 + 1e-9);
  // geometric shrinkage is exact
  CHECK(chain.rho(5) / chain.rho(4) == doctest::Approx(chain.contraction).epsilon(1e-12));

  CHECK_THROWS_AS(cone_chain_build(pt(0.0), pt(1.0), g, 1.0), invalid_input);
}

TEST_CASE("cone chain: random parameter sweep keeps nesting and bracket exact") {
  int built = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto u = [&](int k) { return stochastic::uniform_draw(777, k, i); };
    GeometryParams g;
    g.cone_radius = 0.05 + 0.45 * u(0);
    g.cone_aperture = 0.05 + (kPi / 4 - 0.05) * u(1);
    g.speed_bound = 1.0 + 3.0 * u(2);
    g.two_sphere_ratio = 0.02 + (1.0 / std::exp(1.0) - 0.03) * u(3);
    const double gap = g.cone_radius / (1 + std::sin(g.cone_aperture)) * 0.9;
    const double sigma_tilde = gap * std::pow(10.0, -3.0 * u(4) - 0.5);
    const auto chain = cone_chain_build(pt(0.0), pt(1.0), g, sigma_tilde);
    CHECK(chain.contraction > 0);
    CHECK(chain.contraction < 1);
    CHECK(cone_chain_nesting_ok(chain));
    CHECK(cone_chain_kbar_in_bracket(chain));
    ++built;
  }
  CHECK(built == 1000);
}

TEST_CASE("cone chain balls verified against random point containment") {
  GeometryParams g;
  g.cone_radius = 0.3;
  g.cone_aperture = kPi / 5;
  g.speed_bound = 1.5;
  g.two_sphere_ratio = 0.25;
  Vec axis(2);
  axis << 0.6, 0.8;
  Vec apex(2);
  apex << 0.1, -0.2;
  const auto chain = cone_chain_build(apex, axis, g, 1e-2);
  for (int k = 1; k <= std::min(chain.k_bar, 6); ++k) {
    for (int i = 0; i < 200; ++i) {
      // random point of B_{rho_{k+1}}(w_{k+1})
      const double ang = 2 * kPi * stochastic::uniform_draw(31, k, i);
      const double rad =
          chain.rho(k + 1) * std::sqrt(stochastic::uniform_draw(32, k, i));
      Vec x(2);
      x << chain.center(k + 1)[0] + rad * std::cos(ang),
          chain.center(k + 1)[1] + rad * std::sin(ang);
      CHECK((x - chain.center(k)).norm() <= 3 * chain.rho(k) + 1e-12);
      CHECK(geometry::cone_contains(apex, axis, g.cone_radius, g.cone_aperture, x));
    }
  }
}

TEST_CASE("small propagation: degenerate flags and the heat-ensemble bound") {
  GeometryParams g;
  g.cone_radius = 0.35;
  g.cone_aperture = kPi / 5;
  g.speed_bound = 1.0;
  g.two_sphere_ratio = 0.25;

  // zero field in the cone: non-informative, zero boundary value
  const auto field0 = heat_ensemble(0.0, 5, 2);
  auto zeroed = field0;
  for (auto& s : zeroed.slices) s.setZero();
  const auto chain = cone_chain_build(pt(0.0), pt(1.0), g, 2e-2);
  const auto rep0 = small_propagation_check(zeroed, chain, std::exp(1.0));
  CHECK_FALSE(rep0.informative);
  CHECK(rep0.boundary_value == 0.0);

  // sigma near 1: flagged non-informative
  auto ones = field0;
  for (auto& s : ones.slices) s.setConstant(10.0);  // local mass past 1
  const auto rep1 = small_propagation_check(ones, chain, std::exp(1.0));
  CHECK_FALSE(rep1.informative);

  // heat ensemble: fitted constant reproduces a valid bound at the apex
  const auto field = heat_ensemble(0.2, 21, 48);
  const double kappa0 = 4.0;
  const auto rep = small_propagation_check(field, chain, kappa0);
  if (rep.informative) {
    const double alpha = g.cone_aperture;
    const double bound = rep.fitted_constant * std::pow(kappa0, rep.fitted_constant) *
                         std::pow(std::abs(std::log(rep.sigma_local)),
                                  -alpha / rep.fitted_constant);
    CHECK(rep.boundary_value <= bound * (1 + 1e-9));
    CHECK(rep.chain_masses.size() == chain.k_bar);
  }
}
