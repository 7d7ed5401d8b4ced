// Acceptance suite: one check per shipped guarantee, each printing a single
// PASS/FAIL line with its runtime. Run all with no arguments or a single
// one with --criterion N.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "spdelab/inverse.hpp"
#include "spdelab/report.hpp"
#include "spdelab/verify.hpp"

using namespace spdelab;
using geometry::GeometryParams;
using geometry::MotionLaw;
using geometry::MovingDomain;
using solver::ScalarField;
using solver::SPDECoefficients;
using solver::SpatialGrid;

namespace {

Vec pt(double x) {
  Vec p(1);
  p[0] = x;
  return p;
}

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

SPDECoefficients driven(double noise, const char* u0 = "zero") {
  SPDECoefficients c;
  c.noise_intensity = ScalarField::constant(noise);
  c.boundary_data = ScalarField::constant(1.0);
  c.boundary_floor = 0.9;
  if (std::strcmp(u0, "sine") == 0)
    c.initial_data = [](const Vec& y) { return std::sin(kPi * y[0]); };
  else
    c.initial_data = [](const Vec&) { return 0.0; };
  return c.finalize();
}

// 1. sigma weight machinery: two-sided bounds and the Cauchy-problem residual
// on a thousand-point grid.
Check sigma_machinery() {
  Check c;
  const auto table = weights::shared_sigma_table();
  const double c0 = weights::compute_c0(*table);
  c.require(c0 > 0, "C0 positive");
  c.require(std::abs(c0 - weights::compute_c0_quadrature(1e-14)) < 1e-8 * c0,
            "C0 quadrature agreement");
  double worst = 0;
  for (int j = 1; j <= 1000; ++j) {
    const double s =
        std::exp(std::log(1e-6) + (std::log(kInvE) - std::log(1e-6)) * (j - 1) / 999.0);
    const double v = table->value(s);
    c.require(v <= s * (1 + 1e-12), "sigma <= s");
    c.require(v >= s * std::exp(-c0) * (1 - 1e-12), "sigma >= s e^{-C0}");
    worst = std::max(worst, std::abs(weights::sigma_ode_residual(*table, s)));
  }
  c.require(worst < 1e-6, "ODE residual sup " + std::to_string(worst));
  return c;
}

// 2. heat kernel: free-heat residual decays at second order under halving.
Check heat_kernel_order() {
  Check c;
  auto worst_residual = [&](double h) {
    double worst = 0;
    const double t0 = 1.0;
    for (double gap = 0.01; gap <= 0.2001; gap += 0.01) {
      const double t = t0 - gap;
      for (double x = -0.4; x <= 0.4001; x += 0.08) {
        const Vec y = pt(0.05);
        const double kt = (solver::heat_kernel(t + h, pt(x), t0, y) -
                           solver::heat_kernel(t - h, pt(x), t0, y)) /
                          (2 * h);
        const double kxx = (solver::heat_kernel(t, pt(x + h), t0, y) -
                            2 * solver::heat_kernel(t, pt(x), t0, y) +
                            solver::heat_kernel(t, pt(x - h), t0, y)) /
                           (h * h);
        const double scale = solver::heat_kernel(t, pt(x), t0, y) / gap;
        worst = std::max(worst, std::abs(kt + kxx) / std::max(scale, 1e-12));
      }
    }
    return worst;
  };
  const double rc = worst_residual(2e-3);
  const double rf = worst_residual(1e-3);
  const double order = std::log2(rc / rf);
  c.require(order >= 1.9, "observed order " + std::to_string(order));
  return c;
}

// 3. deterministic eigenmode decay at the default 1-D grid.
Check solver_order() {
  Check c;
  const auto dom = MovingDomain::interval(0.0, 1.0, MotionLaw::statics(), 0.1);
  const auto grid = SpatialGrid::interval(dom, 512);
  SPDECoefficients coeffs;
  coeffs.initial_data = [](const Vec& y) { return std::sin(kPi * y[0]); };
  coeffs.finalize();
  const auto times = stochastic::uniform_time_grid(0.1, 4096);
  const auto ens = stochastic::generate_paths(1, 1, times);
  solver::SolveOptions opt;
  opt.slice_stride = 4096;
  const auto field = solver::solve(dom, coeffs, ens, grid, opt);
  const double got = field.grid.interpolate(field.slices.back().col(0), pt(0.5));
  const double expected = std::exp(-kPi * kPi * 0.1);
  const double rel = std::abs(got - expected) / expected;
  c.require(rel < 1e-3, "relative decay error " + std::to_string(rel));
  return c;
}

// 4. Ito isometry at 1e5 paths plus exact zero preservation.
Check ito_calculus() {
  Check c;
  const auto times = stochastic::uniform_time_grid(1.0, 32);
  const auto ens = stochastic::generate_paths(2026, 100000, times);
  const auto flat = stochastic::ito_isometry_check(ens, Vec::Ones(32));
  c.require(flat.within_3sigma, "constant integrand isometry");
  Vec steps(32);
  for (int k = 0; k < 32; ++k) steps[k] = 2.0 * stochastic::uniform_draw(9, 0, k) - 1.0;
  const auto rough = stochastic::ito_isometry_check(ens, steps);
  c.require(rough.within_3sigma, "random step integrand isometry");

  const auto dom = MovingDomain::interval(0.0, 1.0, MotionLaw::sine(0.1, kPi), 1.0);
  const auto grid = SpatialGrid::interval(dom, 64);
  SPDECoefficients coeffs;
  coeffs.noise_intensity = ScalarField::constant(0.5);
  coeffs.initial_data = [](const Vec&) { return 0.0; };
  coeffs.finalize();
  const auto zens = stochastic::generate_paths(3, 16, stochastic::uniform_time_grid(1.0, 128));
  const auto field = solver::solve(dom, coeffs, zens, grid, {});
  for (const auto& s : field.slices)
    c.require(s.cwiseAbs().maxCoeff() == 0.0, "zero preservation broke");
  return c;
}

// 5. Carleman inequality margins over the manufactured corpus and the lambda
// sweep, with the per-term report on disk.
Check carleman_margins() {
  Check c;
  const auto stat = MovingDomain::interval(0.0, 1.0, MotionLaw::statics(), 1.0);
  const auto moving = MovingDomain::interval(0.0, 1.0, MotionLaw::sine(0.15, kPi), 1.0);
  struct Entry {
    MovingDomain domain;
    solver::ManufacturedSolution solution;
  };
  std::vector<Entry> corpus;
  corpus.push_back({stat, solver::eigenmode_solution(stat, 1, kPi * kPi)});
  corpus.push_back({moving, solver::eigenmode_solution(moving, 2, 6.0)});
  corpus.push_back({moving, solver::advected_bump_solution(moving, 0.45, 0.2)});
  corpus.push_back({stat, solver::geometric_brownian_solution(stat, 0.5)});

  verify::ResidualGrid grid;
  grid.cells = 320;
  grid.time_steps = 320;
  const double t0 = 0.5;
  const double lookback = std::round(0.3 / (t0 / grid.time_steps)) * (t0 / grid.time_steps);
  const auto ens =
      stochastic::generate_paths(17, 96, stochastic::uniform_time_grid(t0, grid.time_steps));

  cli::Json all = cli::Json::array();
  for (const auto& entry : corpus) {
    for (double lambda : {1.0, 2.0, 4.0, 8.0, 16.0}) {
      weights::CarlemanWeights w;
      w.focal_time = t0;
      w.focal_point = pt(0.45);
      w.time_shift = 0.01;
      w.lookback = lookback;
      w.strength = lambda;
      w.sigma = weights::shared_sigma_table();
      const auto rep =
          verify::carleman_residual(entry.solution, entry.domain, w, grid,
                                    entry.solution.stochastic ? &ens : nullptr);
      c.require(rep.margin >= -3 * rep.margin_stderr,
                entry.solution.name + " lambda " + std::to_string(lambda) + " margin " +
                    std::to_string(rep.margin));
      cli::Json j;
      j["solution"] = entry.solution.name;
      j["lambda"] = lambda;
      j["lhs_mass"] = rep.lhs_mass;
      j["lhs_gradient"] = rep.lhs_gradient;
      j["rhs_source"] = rep.rhs_source;
      j["m_initial_gradient"] = rep.m_initial_gradient;
      j["m_focal_mass"] = rep.m_focal_mass;
      j["m_initial_mass"] = rep.m_initial_mass;
      j["m_boundary_flux"] = rep.m_boundary_flux;
      j["n_noise_mass"] = rep.n_noise_mass;
      j["n_noise_gradient"] = rep.n_noise_gradient;
      j["margin"] = rep.margin;
      j["margin_stderr"] = rep.margin_stderr;
      all.push_back(j);
    }
  }
  cli::atomic_write("acceptance_out/carleman_terms.json", all.dump(2) + "\n");
  FILE* f = std::fopen("acceptance_out/carleman_terms.json", "rb");
  c.require(f != nullptr, "per-term report missing");
  if (f) std::fclose(f);
  return c;
}

// 6. two-sphere one-cylinder: train/holdout validation and grid-refinement
// stability of the fitted constants.
Check two_sphere_sweep() {
  Check c;
  GeometryParams g;
  g.interior_ball_radius = 0.45;
  g.two_sphere_ratio = 0.25;
  const double cap = 1.0 / std::sqrt(2 * std::exp(1.0));

  auto run_at = [&](int cells, int steps) {
    const auto dom = MovingDomain::interval(0.0, 1.0, MotionLaw::statics(), 1.0);
    const auto grid = SpatialGrid::interval(dom, cells);
    SPDECoefficients coeffs;
    coeffs.noise_intensity = ScalarField::constant(0.25);
    coeffs.initial_data = [](const Vec& y) {
      return std::exp(-sq(y[0] - 0.5) / 0.02) + 0.4 * std::sin(kPi * y[0]);
    };
    coeffs.finalize();
    const auto ens =
        stochastic::generate_paths(71, 64, stochastic::uniform_time_grid(1.0, steps));
    solver::SolveOptions opt;
    opt.slice_stride = std::max(1, steps / 64);
    opt.extra_slice_times = {0.36, 0.64, 1.0};
    const auto field = solver::solve(dom, coeffs, ens, grid, opt);

    std::vector<verify::TwoSphereReport> train, holdout;
    int idx = 0;
    for (double t0 : {0.36, 0.64, 1.0})
      for (double r1 : {0.3, 0.38})
        for (double r : {0.02, 0.03, 0.045}) {
          verify::TwoSphereParams p;
          p.focal_time = t0;
          p.center = pt(0.5);
          p.large_radius = std::min({r1, cap, std::sqrt(t0), g.interior_ball_radius});
          p.middle_radius = g.two_sphere_ratio * p.large_radius;
          p.small_radius = r;
          p.validate(g);
          const auto rep = verify::measure_two_sphere(field, p);
          ((idx++ % 3 == 2) ? holdout : train).push_back(rep);
        }
    return std::tuple(verify::two_sphere_fit(train), train, holdout);
  };

  const auto [fit, train, holdout] = run_at(192, 512);
  c.require(static_cast<int>(train.size()) >= 12, "training sweep has 12 triples");
  const auto validation = verify::two_sphere_validate(fit, holdout);
  c.require(validation.checked >= 4, "holdout populated");
  c.require(validation.violations == 0,
            "holdout violations " + std::to_string(validation.violations));

  const auto [fine_fit, fine_train, fine_holdout] = run_at(384, 1024);
  (void)fine_train;
  (void)fine_holdout;
  const double mult_drift = std::abs(fine_fit.c_mult - fit.c_mult) / fit.c_mult;
  const double exp_drift = std::abs(fine_fit.c_exp - fit.c_exp) / fit.c_exp;
  c.require(mult_drift < 0.2, "multiplier drift " + std::to_string(mult_drift));
  c.require(exp_drift < 0.2, "exponent drift " + std::to_string(exp_drift));
  return c;
}

// 7. iteration lemma dominates its unrolled recursion in exact arithmetic.
Check iteration_lemma() {
  Check c;
  int failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto u = [&](int k) { return stochastic::uniform_draw(555, k, i); };
    const long long qs = 2 + static_cast<long long>(u(0) * 14);
    const long long ps = 1 + static_cast<long long>(u(1) * (qs - 1));
    const long long qc = 1 + static_cast<long long>(u(2) * 9);
    const long long pc = qc + 1 + static_cast<long long>(u(3) * 20);
    const long long qx = 1 + static_cast<long long>(u(4) * 9);
    const long long px = 1 + static_cast<long long>(u(5) * 9);
    const int n = 1 + static_cast<int>(u(6) * 29);
    if (!verify::iteration_bound_dominates_exact(px, qx, pc, qc, ps, qs, n)) ++failures;
  }
  c.require(failures == 0, std::to_string(failures) + " exact-arithmetic failures");
  return c;
}

// 8. cone chains: nesting and the stopping-index bracket over random draws.
Check cone_chains() {
  Check c;
  int failures = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto u = [&](int k) { return stochastic::uniform_draw(777, k, i); };
    GeometryParams g;
    g.cone_radius = 0.05 + 0.45 * u(0);
    g.cone_aperture = 0.05 + (kPi / 4 - 0.05) * u(1);
    g.speed_bound = 1.0 + 3.0 * u(2);
    g.two_sphere_ratio = 0.02 + (1.0 / std::exp(1.0) - 0.03) * u(3);
    const double gap = g.cone_radius / (1 + std::sin(g.cone_aperture)) * 0.9;
    const double sigma_tilde = gap * std::pow(10.0, -3.0 * u(4) - 0.5);
    const auto chain = verify::cone_chain_build(pt(0.0), pt(1.0), g, sigma_tilde);
    if (!(chain.contraction > 0 && chain.contraction < 1)) ++failures;
    if (!verify::cone_chain_nesting_ok(chain)) ++failures;
    if (!verify::cone_chain_kbar_in_bracket(chain)) ++failures;
  }
  c.require(failures == 0, std::to_string(failures) + " chain failures");
  return c;
}

// 9. uniqueness probe: boundary perturbations of 2/4/8 cells push the
// observation gap monotonically past three coupled-noise floors.
Check uniqueness_probe() {
  Check c;
  inverse::ExperimentScale scale;
  scale.cells = 128;
  scale.steps = 512;
  scale.paths = 64;
  scale.seed = 2718;
  scale.horizon = 1.0;
  functionals::ObservationWindow w;
  w.lo = pt(0.25);
  w.hi = pt(0.55);
  w.t_end = 1.0;
  const auto reference = MovingDomain::interval(0.0, 1.0, MotionLaw::statics(), 1.0);
  double prev = 0;
  for (double cells_off : {2.0, 4.0, 8.0}) {
    const double h = cells_off / scale.cells;
    const auto candidate = MovingDomain::interval(0.0, 1.0, MotionLaw::linear(-h), 1.0);
    const auto probe = inverse::uniqueness_probe(reference, candidate, driven(0.2), scale, w);
    c.require(probe.gap.value > 3 * probe.noise_floor,
              "gap above floor at offset " + std::to_string(cells_off));
    c.require(probe.gap.value >= prev, "gap monotone at offset " + std::to_string(cells_off));
    prev = probe.gap.value;
  }
  return c;
}

// 10. stability sweep: positive fitted exponent at 95% confidence and the
// paired-sweep ordering.
Check stability_law() {
  Check c;
  inverse::StabilitySweepConfig cfg;
  cfg.scale.cells = 256;
  cfg.scale.paths = 96;
  cfg.scale.seed = 4242;
  cfg.scale.slice_stride = 8;
  cfg.window.lo = pt(0.68);
  cfg.window.hi = pt(0.88);
  cfg.snapshot_spacing = 0.002;
  cfg.threads = 2;
  const std::vector<double> amplitudes = {0.036, 0.0429, 0.0512, 0.0611, 0.0729, 0.087};
  const auto coeffs = driven(0.15, "sine");

  auto run_at = [&](double t0) {
    auto local = cfg;
    local.window.t_end = t0;
    local.scale.horizon = t0;
    local.scale.steps = std::max(64, static_cast<int>(std::lround(10240 * t0)));
    const auto reference = MovingDomain::interval(0.0, 1.0, MotionLaw::statics(), t0);
    auto family = [t0](double h) {
      return MovingDomain::interval(0.0, 1.0, MotionLaw::linear(-h / t0), t0);
    };
    return inverse::stability_sweep(reference, family, amplitudes, coeffs, local);
  };

  const double t0 = 0.16;
  const auto main_sweep = run_at(t0);
  c.require(static_cast<int>(main_sweep.records.size()) >= 6, "six amplitudes");
  c.require(main_sweep.fit.q_confidence95_lo > 0,
            "q > 0 at 95% (lo = " + std::to_string(main_sweep.fit.q_confidence95_lo) + ")");
  const auto quarter = run_at(t0 / 4);
  c.require(quarter.fit.exponent_q < main_sweep.fit.exponent_q,
            "gamma ordering (q = " + std::to_string(main_sweep.fit.exponent_q) +
                ", quarter q = " + std::to_string(quarter.fit.exponent_q) + ")");
  return c;
}

// 11. reconstruction recovers an in-grid truth exactly from coupled data.
Check reconstruction() {
  Check c;
  inverse::BoundaryParametrization model;
  model.coeffs = pt(0.0);
  model.admissible_box.resize(2, 1);
  model.admissible_box << -0.3, 0.3;
  model.x_left = 0.0;
  model.s0 = 1.0;
  model.horizon = 1.0;
  inverse::ExperimentScale scale;
  scale.cells = 128;
  scale.steps = 512;
  scale.paths = 64;
  scale.seed = 7;
  const double truth = -0.15;
  const auto obs =
      inverse::solve_forward(model.with_coeffs(pt(truth)).domain(), driven(0.2), scale);
  functionals::ObservationWindow w;
  w.lo = pt(0.2);
  w.hi = pt(0.5);
  w.t_end = 1.0;
  inverse::SearchConfig search;
  search.grid_points = 17;
  const auto result = inverse::reconstruct_boundary(obs, model, driven(0.2), scale, w, search);
  c.require(std::abs(result.best.coeffs[0] - truth) < 1e-12,
            "recovered " + std::to_string(result.best.coeffs[0]));
  c.require(result.misfit == 0.0, "misfit " + std::to_string(result.misfit));
  return c;
}

struct Criterion {
  int id;
  const char* name;
  Check (*run)();
  double budget_seconds;
};

const Criterion kCriteria[] = {
    {1, "sigma weight bounds and Cauchy residual", sigma_machinery, 5},
    {2, "heat-kernel residual order under halving", heat_kernel_order, 10},
    {3, "deterministic eigenmode decay accuracy", solver_order, 5},
    {4, "Ito isometry and exact zero preservation", ito_calculus, 30},
    {5, "weighted-inequality margins over the corpus", carleman_margins, 300},
    {6, "two-sphere sweep with holdout and refinement", two_sphere_sweep, 600},
    {7, "iteration lemma exact dominance", iteration_lemma, 5},
    {8, "cone chain nesting and stopping bracket", cone_chains, 5},
    {9, "uniqueness probe gap above the noise floor", uniqueness_probe, 300},
    {10, "logarithmic stability fit and pairing", stability_law, 1800},
    {11, "exact reconstruction of an in-grid truth", reconstruction, 600},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[i + 1]);
  }
  int failures = 0;
  for (const auto& criterion : kCriteria) {
    if (only != 0 && criterion.id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Check check;
    try {
      check = criterion.run();
    } catch (const std::exception& err) {
      check.ok = false;
      check.detail = std::string("exception: ") + err.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (elapsed > criterion.budget_seconds) {
      check.ok = false;
      check.detail += (check.detail.empty() ? "" : "; ") + std::string("over budget");
    }
    std::printf("[%s] criterion %2d: %s (%.2fs)%s%s\n", check.ok ? "PASS" : "FAIL",
                criterion.id, criterion.name, elapsed, check.detail.empty() ? "" : " -- ",
                check.detail.c_str());
    std::fflush(stdout);
    if (!check.ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
