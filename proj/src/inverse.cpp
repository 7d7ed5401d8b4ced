#include "spdelab/inverse.hpp"

#include <cmath>
#include <future>

namespace spdelab::inverse {

double stability_gamma(double kappa0, double t, int dim) {
  if (!(kappa0 >= std::exp(1.0) - 1e-12) || !(t > 0))
    throw invalid_input("stability_gamma: need kappa0 >= e and t > 0");
  return sq(std::log(kappa0)) + std::exp(1.0 / std::pow(t, dim / 2.0));
}

EnsembleField solve_forward(const MovingDomain& domain, const SPDECoefficients& coeffs,
                            const ExperimentScale& scale) {
  const auto times = stochastic::uniform_time_grid(scale.horizon, scale.steps);
  const auto ensemble = stochastic::generate_paths(scale.seed, scale.paths, times);
  const auto grid = domain.dim() == 1 ? solver::SpatialGrid::interval(domain, scale.cells)
                                      : solver::SpatialGrid::embedded(domain, scale.cells);
  solver::SolveOptions opt;
  opt.slice_stride = scale.slice_stride;
  opt.extra_slice_times = scale.extra_slice_times;
  return solver::solve(domain, coeffs, ensemble, grid, opt);
}

// --- boundary parametrization --------------------------------------------------------

bool BoundaryParametrization::inside_box(double slack) const {
  for (int j = 0; j < parameter_count(); ++j)
    if (coeffs[j] < admissible_box(0, j) - slack || coeffs[j] > admissible_box(1, j) + slack)
      return false;
  return true;
}

BoundaryParametrization BoundaryParametrization::with_coeffs(Vec theta) const {
  BoundaryParametrization p = *this;
  p.coeffs = std::move(theta);
  return p;
}

BoundaryParametrization BoundaryParametrization::clamped_to_box() const {
  BoundaryParametrization p = *this;
  for (int j = 0; j < parameter_count(); ++j)
    p.coeffs[j] = std::min(std::max(coeffs[j], admissible_box(0, j)), admissible_box(1, j));
  return p;
}

MovingDomain BoundaryParametrization::domain() const {
  if (basis == Basis::EndpointLinearSine) {
    const double rate = parameter_count() > 0 ? coeffs[0] : 0.0;
    const double amp = parameter_count() > 1 ? coeffs[1] : 0.0;
    return MovingDomain::interval(x_left, s0,
                                  geometry::MotionLaw::linear_sine(rate, amp, omega), horizon);
  }
  const double amp = parameter_count() > 0 ? coeffs[0] : 0.0;
  return MovingDomain::star(center, r0, Vec(), Vec(),
                            geometry::MotionLaw::sine(amp, omega), horizon);
}

bool BoundaryParametrization::admissible(const GeometryParams& g,
                                         double snapshot_spacing) const {
  if (!inside_box()) return false;
  const MovingDomain dom = domain();
  for (double frac : {0.25, 0.5, 1.0}) {
    const auto snap = dom.snapshot(horizon * frac, snapshot_spacing);
    if (!geometry::check_interior_ball(snap, g.interior_ball_radius)) return false;
  }
  geometry::SpeedBoundGrid sbg;
  sbg.time_samples = 6;
  sbg.point_samples = 12;
  return geometry::check_speed_bound(dom, g.speed_bound, sbg);
}

// --- uniqueness probe ------------------------------------------------------------------

UniquenessProbe uniqueness_probe(const MovingDomain& truth, const MovingDomain& candidate,
                                 const SPDECoefficients& coeffs, const ExperimentScale& scale,
                                 const ObservationWindow& window) {
  // The theorem assumes I(0) is known: both families must start from the
  // same reference domain.
  const double spacing = 0.01;
  const double d0 = geometry::hausdorff_distance(truth.snapshot(0.0, spacing),
                                                 candidate.snapshot(0.0, spacing));
  if (d0 > 2 * spacing)
    throw invalid_input("uniqueness_probe: initial domains differ (I(0) must be known)");

  ExperimentScale s = scale;
  s.extra_slice_times.push_back(window.t_end);
  const EnsembleField u1 = solve_forward(truth, coeffs, s);
  const EnsembleField u2 = solve_forward(candidate, coeffs, s);
  UniquenessProbe probe;
  probe.gap = functionals::observation_gap(u1, u2, window);
  probe.noise_floor = probe.gap.stderr_mc;
  const double snap_h = (truth.as_interval() ? truth.as_interval()->s0 : 1.0) / scale.cells;
  const auto g1 = truth.snapshot(window.t_end, snap_h);
  const auto g2 = candidate.snapshot(window.t_end, snap_h);
  probe.hausdorff = geometry::hausdorff_distance(g1, g2);
  probe.modified = geometry::modified_distance(g1, g2);
  return probe;
}

// --- reconstruction ----------------------------------------------------------------------

namespace {

double misfit_of(const BoundaryParametrization& theta, const EnsembleField& observations,
                 const SPDECoefficients& coeffs, const ExperimentScale& scale,
                 const ObservationWindow& window) {
  const EnsembleField trial = solve_forward(theta.domain(), coeffs, scale);
  const double value = functionals::observation_misfit(trial, observations, window).value;
  if (!std::isfinite(value))
    throw numerical_error("reconstruct_boundary: non-finite misfit at theta = " +
                          std::to_string(theta.coeffs[0]));
  return value;
}

}  // namespace

ReconstructionResult reconstruct_boundary(const EnsembleField& observations,
                                          const BoundaryParametrization& model,
                                          const SPDECoefficients& coeffs,
                                          const ExperimentScale& scale,
                                          const ObservationWindow& window,
                                          const SearchConfig& search) {
  const int np = model.parameter_count();
  if (np < 1 || np > 8)
    throw invalid_input("reconstruct_boundary: parameter count must lie in [1, 8]");

  ReconstructionResult result;
  result.misfit = INFINITY;
  auto consider = [&](const Vec& theta) {
    const auto candidate = model.with_coeffs(theta).clamped_to_box();
    const double m = misfit_of(candidate, observations, coeffs, scale, window);
    ++result.evaluations;
    if (m < result.misfit) {
      result.misfit = m;
      result.best = candidate;
    }
  };

  if (search.exhaustive) {
    if (np > 2)
      throw invalid_input("reconstruct_boundary: exhaustive search supports <= 2 parameters");
    const int g = search.grid_points;
    if (np == 1) {
      for (int i = 0; i < g; ++i) {
        Vec theta(1);
        theta[0] = model.admissible_box(0, 0) +
                   (model.admissible_box(1, 0) - model.admissible_box(0, 0)) * i / (g - 1);
        consider(theta);
      }
    } else {
      for (int i = 0; i < g; ++i)
        for (int j = 0; j < g; ++j) {
          Vec theta(2);
          theta[0] = model.admissible_box(0, 0) +
                     (model.admissible_box(1, 0) - model.admissible_box(0, 0)) * i / (g - 1);
          theta[1] = model.admissible_box(0, 1) +
                     (model.admissible_box(1, 1) - model.admissible_box(0, 1)) * j / (g - 1);
          consider(theta);
        }
    }
  } else {
    // Coordinate descent with shrinking steps from the box center.
    Vec theta(np);
    Vec step(np);
    for (int j = 0; j < np; ++j) {
      theta[j] = 0.5 * (model.admissible_box(0, j) + model.admissible_box(1, j));
      step[j] = search.initial_step * (model.admissible_box(1, j) - model.admissible_box(0, j));
    }
    consider(theta);
    for (int sweep = 0; sweep < search.descent_sweeps; ++sweep) {
      bool improved = false;
      for (int j = 0; j < np; ++j) {
        for (double sign : {+1.0, -1.0}) {
          Vec trial = result.best.coeffs;
          trial[j] += sign * step[j];
          const double before = result.misfit;
          consider(trial);
          if (result.misfit < before) {
            improved = true;
            break;
          }
        }
      }
      if (!improved) step *= 0.5;
      if (step.maxCoeff() < 1e-6) break;
    }
  }

  // Boundary-of-box flag: the argmin sits on an edge of the admissible box.
  for (int j = 0; j < np; ++j) {
    const double span = model.admissible_box(1, j) - model.admissible_box(0, j);
    if (std::abs(result.best.coeffs[j] - model.admissible_box(0, j)) < 1e-12 * span ||
        std::abs(result.best.coeffs[j] - model.admissible_box(1, j)) < 1e-12 * span)
      result.clamped = true;
  }
  return result;
}

// --- stability sweep ----------------------------------------------------------------------

void StabilityRecord::validate() const {
  if (!(eps_tilde > 0 && eps_tilde < 1))
    throw invalid_input("StabilityRecord: eps_tilde must lie in (0,1)");
  if (!(d >= d_m && d_m >= 0)) throw invalid_input("StabilityRecord: need d >= d_m >= 0");
  if (!(gamma >= 1 + std::exp(1.0) - 1e-9))
    throw invalid_input("StabilityRecord: gamma below its floor");
}

namespace {

// One-sided 95% Student-t quantiles, df = 1..30.
double t_quantile_95(int df) {
  static const double table[] = {6.314, 2.920, 2.353, 2.132, 2.015, 1.943, 1.895, 1.860,
                                 1.833, 1.812, 1.796, 1.782, 1.771, 1.761, 1.753, 1.746,
                                 1.740, 1.734, 1.729, 1.725, 1.721, 1.717, 1.714, 1.711,
                                 1.708, 1.706, 1.703, 1.701, 1.699, 1.697};
  if (df < 1) return INFINITY;
  if (df > 30) return 1.645;
  return table[df - 1];
}

}  // namespace

StabilityFit fit_stability_law(const std::vector<StabilityRecord>& records) {
  std::vector<double> xs, ys;
  for (const auto& r : records)
    if (r.above_floor && r.eps_tilde > 0 && r.eps_tilde < 1 && r.d > 0) {
      xs.push_back(std::log(std::abs(std::log(r.eps_tilde))));
      ys.push_back(std::log(r.d));
    }
  if (xs.size() < 5)
    throw invalid_input("fit_stability_law: insufficient data (need >= 5 usable records)");
  Vec x(xs.size()), y(ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    x[i] = xs[i];
    y[i] = ys[i];
  }
  const verify::LinearFit f = verify::fit_line(x, y);
  StabilityFit fit;
  fit.exponent_q = -f.slope;
  fit.q_stderr = f.slope_stderr;
  fit.amplitude_a = std::exp(f.intercept);
  fit.used_records = f.points;
  fit.q_confidence95_lo = fit.exponent_q - t_quantile_95(f.points - 2) * fit.q_stderr;
  return fit;
}

StabilitySweepResult stability_sweep(const MovingDomain& reference,
                                     const std::function<MovingDomain(double)>& perturbed,
                                     const std::vector<double>& amplitudes,
                                     const SPDECoefficients& coeffs,
                                     const StabilitySweepConfig& cfg) {
  if (amplitudes.size() < 5)
    throw invalid_input("stability_sweep: need at least 5 perturbation amplitudes");
  const double t0 = cfg.window.t_end;
  ExperimentScale scale = cfg.scale;
  scale.extra_slice_times.push_back(t0);
  const EnsembleField u_ref = solve_forward(reference, coeffs, scale);
  const auto ref_snap = reference.snapshot(t0, cfg.snapshot_spacing);

  auto measure = [&](double h) {
    const MovingDomain dom = perturbed(h);
    const EnsembleField u = solve_forward(dom, coeffs, scale);
    const auto gap = functionals::observation_gap(u, u_ref, cfg.window);
    const auto snap = dom.snapshot(t0, cfg.snapshot_spacing);
    StabilityRecord rec;
    rec.amplitude = h;
    rec.t0 = t0;
    rec.eps_tilde = gap.value;
    rec.gap_stderr = gap.stderr_mc;
    rec.d = geometry::hausdorff_distance(snap, ref_snap);
    rec.d_m = geometry::modified_distance(snap, ref_snap);
    rec.gamma = stability_gamma(cfg.kappa0, t0, reference.dim());
    rec.above_floor = gap.value > cfg.floor_factor * gap.stderr_mc && gap.value > 0;
    if (rec.above_floor) rec.validate();
    return rec;
  };

  StabilitySweepResult out;
  out.records.resize(amplitudes.size());
  const int workers = std::max(1, cfg.threads);
  for (std::size_t base = 0; base < amplitudes.size(); base += workers) {
    std::vector<std::future<StabilityRecord>> batch;
    for (std::size_t j = base; j < std::min(base + workers, amplitudes.size()); ++j)
      batch.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                 measure, amplitudes[j]));
    for (std::size_t j = 0; j < batch.size(); ++j) out.records[base + j] = batch[j].get();
  }
  out.fit = fit_stability_law(out.records);
  return out;
}

// --- domain-difference energies --------------------------------------------------------------

DomainDifferenceReport domain_difference_energy(const EnsembleField& u1,
                                                const EnsembleField& u2, double eps_tilde,
                                                double rho_bar) {
  DomainDifferenceReport rep;
  rep.eps_tilde = eps_tilde;

  auto difference_energy = [&](const EnsembleField& mine, const EnsembleField& other) {
    double sup = 0;
    bool nonempty = false;
    for (std::size_t si = 0; si < mine.slice_times.size(); ++si) {
      const double t = mine.slice_times[si];
      const Mat pts = solver::physical_points(mine.domain, mine.grid, t);
      const Vec w = solver::physical_weights(mine.domain, mine.grid, t);
      Vec mask = Vec::Zero(mine.grid.node_count());
      for (int i = 0; i < mine.grid.node_count(); ++i) {
        if (mine.grid.unknown_of_node(i) < 0) continue;  // Dirichlet rows, zero measure
        if (!other.domain.contains(t, pts.col(i))) {
          mask[i] = w[i];
          nonempty = true;
        }
      }
      const Mat& slice = mine.slices[si];
      double acc = 0;
      for (int p = 0; p < mine.paths; ++p)
        acc += (slice.col(p).array().square() * mask.array()).sum();
      sup = std::max(sup, acc / mine.paths);
    }
    return std::pair<double, bool>(sup, nonempty);
  };

  const auto [e1, ne1] = difference_energy(u1, u2);
  const auto [e2, ne2] = difference_energy(u2, u1);
  rep.energy_1 = e1;
  rep.energy_2 = e2;
  rep.difference_empty = !(ne1 || ne2);

  // Interior positivity probe: a ball of radius rho_bar well inside G1 at the
  // final stored time.
  const double t_last = u1.slice_times.back();
  const auto snap = u1.domain.snapshot(t_last, rho_bar / 4);
  const auto core = geometry::interior_shrink(snap, 2 * rho_bar);
  if (core.interior.cols() > 0) {
    const Vec z = core.interior.col(core.interior.cols() / 2);
    rep.lower_bound_mass = sq(functionals::sphere_mass(u1, t_last, z, rho_bar).value);
  }
  return rep;
}

DifferenceDecayFit fit_difference_decay(const std::vector<DomainDifferenceReport>& sweep,
                                        double kappa0, int dim) {
  if (!(kappa0 > 1.0)) throw invalid_input("fit_difference_decay: kappa0 must exceed 1");
  DifferenceDecayFit fit;
  for (const auto& rec : sweep) {
    const double energy = std::max(rec.energy_1, rec.energy_2);
    if (!(rec.eps_tilde > 0 && rec.eps_tilde < std::exp(-1.0)) || !(energy > 0)) continue;
    ++fit.used_records;
    const double abs_ln = std::abs(std::log(rec.eps_tilde));
    // double-log shape: C = ln(energy (ln|ln eps|)^{1/n}) / ln kappa0
    const double c1 = std::log(energy * std::pow(std::log(abs_ln), 1.0 / dim)) /
                      std::log(kappa0);
    fit.c_loglog = std::max(fit.c_loglog, std::max(0.0, c1));
    // single-log shape: smallest C with C ln kappa0 - ln|ln eps| / C >= ln energy
    double lo = 1e-6, hi = 1.0;
    auto g = [&](double c) { return c * std::log(kappa0) - std::log(abs_ln) / c; };
    while (g(hi) < std::log(energy) && hi < 1e6) hi *= 2;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) >= std::log(energy) ? hi : lo) = mid;
    }
    fit.c_log = std::max(fit.c_log, hi);
  }
  if (fit.used_records < 3)
    throw invalid_input("fit_difference_decay: insufficient data (need >= 3 usable records)");
  return fit;
}

}  // namespace spdelab::inverse
