#include "spdelab/verify.hpp"

#include <algorithm>
#include <cmath>

namespace spdelab::verify {

LinearFit fit_line(const Vec& x, const Vec& y) {
  if (x.size() != y.size() || x.size() < 2) throw invalid_input("fit_line: need >= 2 points");
  const int n = static_cast<int>(x.size());
  const double xm = x.mean(), ym = y.mean();
  const double sxx = (x.array() - xm).square().sum();
  if (!(sxx > 0)) throw invalid_input("fit_line: degenerate abscissae");
  const double sxy = ((x.array() - xm) * (y.array() - ym)).sum();
  LinearFit f;
  f.points = n;
  f.slope = sxy / sxx;
  f.intercept = ym - f.slope * xm;
  double ssr = 0;
  for (int i = 0; i < n; ++i) ssr += sq(y[i] - f.intercept - f.slope * x[i]);
  f.slope_stderr = n > 2 ? std::sqrt(ssr / (n - 2) / sxx) : 0.0;
  return f;
}

// --- Carleman estimate ------------------------------------------------------------

namespace {

struct IntervalQuadrature {
  Vec reference;  // reference nodes
  double h = 0;
};

IntervalQuadrature interval_nodes(const MovingDomain& domain, int cells) {
  const auto* iv = domain.as_interval();
  if (!iv) throw invalid_input("carleman_residual: interval family required");
  IntervalQuadrature q;
  q.h = (iv->s0 - iv->x_left) / cells;
  q.reference.resize(cells + 1);
  for (int i = 0; i <= cells; ++i) q.reference[i] = iv->x_left + i * q.h;
  return q;
}

}  // namespace

CarlemanResidualReport carleman_residual(const ManufacturedSolution& solution,
                                         const MovingDomain& domain,
                                         const CarlemanWeights& w,
                                         const ResidualGrid& grid,
                                         const stochastic::Ensemble* ensemble) {
  w.validate();
  if (solution.stochastic && !ensemble)
    throw invalid_input("carleman_residual: stochastic solution needs an ensemble");
  const double t0 = w.focal_time, a = w.time_shift, b = w.lookback, lambda = w.strength;
  // The weighted-inequality constant must satisfy both sigma bounds; the
  // ratio-tight c0 alone does not floor sigma'.
  const double c0 = w.sigma->bounds_constant();
  // Overflow guard: the largest weight factor is sigma(a)^{-2 lambda}.
  if (2 * lambda * std::abs(std::log(w.sigma->value(a))) > 690)
    throw numerical_error("carleman_residual: weight overflows double; raise a or lower lambda");

  // Time nodes: the ensemble grid restricted to [t0-b, t0] for stochastic
  // solutions, a uniform internal grid otherwise.
  std::vector<double> times;
  std::vector<int> ensemble_steps;  // grid index per time node
  if (solution.stochastic) {
    const Vec& tg = ensemble->times();
    for (int k = 0; k < tg.size(); ++k)
      if (tg[k] >= t0 - b - 1e-12 && tg[k] <= t0 + 1e-12) {
        times.push_back(tg[k]);
        ensemble_steps.push_back(k);
      }
    if (times.size() < 3 || std::abs(times.front() - (t0 - b)) > 1e-9 ||
        std::abs(times.back() - t0) > 1e-9)
      throw invalid_input("carleman_residual: align t0 and b to the ensemble time grid");
  } else {
    for (int j = 0; j <= grid.time_steps; ++j) times.push_back(t0 - b + b * j / grid.time_steps);
  }
  const int nt = static_cast<int>(times.size());

  const IntervalQuadrature quad = interval_nodes(domain, grid.cells);
  const int nx = static_cast<int>(quad.reference.size());
  const int n_paths = solution.stochastic ? ensemble->size() : 1;
  const int dim = 1;

  // Per-path Brownian values at the time nodes.
  Mat brownian = Mat::Zero(nt, n_paths);
  if (solution.stochastic) {
    for (int p = 0; p < n_paths; ++p) {
      const Vec wvals = ensemble->path(p).values();
      for (int j = 0; j < nt; ++j) brownian(j, p) = wvals[ensemble_steps[j]];
    }
  }

  // Hypothesis check: u must vanish on the whole boundary.
  {
    double interior_scale = 0, boundary_sup = 0;
    const auto* iv = domain.as_interval();
    for (int j = 0; j < nt; j += std::max(1, nt / 8)) {
      const double t = times[j];
      Vec left(1), right(1), mid(1);
      left[0] = iv->x_left;
      right[0] = iv->endpoint(t);
      mid[0] = 0.5 * (left[0] + right[0]);
      for (int p = 0; p < std::min(n_paths, 4); ++p) {
        const double bw = brownian(j, p);
        boundary_sup = std::max({boundary_sup, std::abs(solution.value(t, left, bw)),
                                 std::abs(solution.value(t, right, bw))});
        interior_scale = std::max(interior_scale, std::abs(solution.value(t, mid, bw)));
      }
    }
    if (boundary_sup > 1e-8 * (1 + interior_scale))
      throw invalid_input("carleman_residual: hypothesis u = 0 on the boundary is violated");
  }

  CarlemanResidualReport rep;
  rep.paths = n_paths;
  Vec margins(n_paths);
  double acc_lhs_mass = 0, acc_lhs_grad = 0, acc_rhs = 0, acc_m1 = 0, acc_m2 = 0,
         acc_m3 = 0, acc_m4 = 0, acc_n1 = 0, acc_n2 = 0;

  const double log_sigma_a = std::log(w.sigma->value(a));
  const double log_sigma_ab = std::log(w.sigma->value(a + b));

  for (int p = 0; p < n_paths; ++p) {
    double lhs_mass = 0, lhs_grad = 0, rhs = 0, m1 = 0, m2 = 0, m3 = 0, m4 = 0, n1 = 0,
           n2 = 0;
    for (int j = 0; j < nt; ++j) {
      const double t = times[j];
      const double wt = (j == 0        ? (times[1] - times[0]) / 2
                         : j == nt - 1 ? (times[nt - 1] - times[nt - 2]) / 2
                                       : (times[j + 1] - times[j - 1]) / 2);
      const double s = t0 - t + a;
      const double sigma_a = w.sigma->value(s);
      const double ln3 = std::pow(std::abs(std::log(s)), 3);
      const double bw = brownian(j, p);
      const auto* iv = domain.as_interval();
      const double endpoint = iv->endpoint(t);
      const double stretch = (endpoint - iv->x_left) / (iv->s0 - iv->x_left);
      const double hx = quad.h * stretch;

      for (int i = 0; i < nx; ++i) {
        Vec x(1);
        x[0] = iv->x_left + (quad.reference[i] - iv->x_left) * stretch;
        const double wx = (i == 0 || i == nx - 1) ? hx / 2 : hx;
        const double uval = solution.value(t, x, bw);
        const Vec grad = solution.gradient(t, x, bw);
        const double g1 = solution.drift_source(t, x, bw);
        const double g2 = solution.noise_source(t, x, bw);
        const Vec g2grad = solution.noise_source_gradient(t, x, bw);
        const double phi_val =
            -(x - w.focal_point).squaredNorm() / (8 * s) - lambda * std::log(sigma_a);
        const double e2phi = std::exp(2 * phi_val);
        const double cell = wt * wx;
        lhs_mass += cell * lambda * std::exp(-c0) / ln3 * e2phi * sq(uval);
        lhs_grad += cell * 0.5 * std::exp(-2 * c0) * sigma_a / ln3 * e2phi * grad.squaredNorm();
        rhs += cell * std::exp(2 * c0) * sq(sigma_a) * e2phi * sq(g1);
        n1 += cell * (0.5 + dim / 4.0) * s * e2phi * sq(g2);
        n2 += cell * sq(s) * e2phi * g2grad.squaredNorm();
      }

      // Boundary flux by one-sided differences: u = 0 on the boundary, so
      // the normal derivative is -u(one cell in)/h and the tangential part
      // vanishes.
      for (int side = 0; side < 2; ++side) {
        Vec xb(1), xin(1);
        xb[0] = side == 0 ? iv->x_left : endpoint;
        const double nu = side == 0 ? -1.0 : 1.0;
        xin[0] = xb[0] - nu * hx;
        const double du_dn = -solution.value(t, xin, bw) / hx;
        const double phi_b =
            -(xb - w.focal_point).squaredNorm() / (8 * s) - lambda * std::log(sigma_a);
        const double e2phi_b = std::exp(2 * phi_b);
        const double g2b = solution.noise_source(t, xb, bw);
        const double lever = (xb[0] - w.focal_point[0]) * nu;
        m4 -= wt * lever * (e2phi_b * sq(du_dn) + 0.25 * s * e2phi_b * sq(g2b));
      }
    }

    // Endpoint slices: t0 - b carries the initial gradient and mass terms,
    // t0 the focal mass term.
    {
      const auto* iv = domain.as_interval();
      const double t_init = times.front();
      const double s_init = t0 - t_init + a;
      const double endpoint = iv->endpoint(t_init);
      const double stretch = (endpoint - iv->x_left) / (iv->s0 - iv->x_left);
      const double hx = quad.h * stretch;
      const double bw0 = brownian(0, p);
      for (int i = 0; i < nx; ++i) {
        Vec x(1);
        x[0] = iv->x_left + (quad.reference[i] - iv->x_left) * stretch;
        const double wx = (i == 0 || i == nx - 1) ? hx / 2 : hx;
        const double uval = solution.value(t_init, x, bw0);
        const Vec grad = solution.gradient(t_init, x, bw0);
        const double sigma_init = w.sigma->value(s_init);
        const double phi_val =
            -(x - w.focal_point).squaredNorm() / (8 * s_init) - lambda * std::log(sigma_init);
        const Vec grad_phi = -(x - w.focal_point) / (4 * s_init);
        const Vec grad_v = std::exp(phi_val) * (grad + uval * grad_phi);
        m1 += wx * sq(a + b) * grad_v.squaredNorm();
        m3 += wx * ((x - w.focal_point).squaredNorm() / 16 + (a + b) / 2) *
              std::exp(-2 * lambda * log_sigma_ab) * sq(uval);
      }
      const double t_end = times.back();
      const double endpoint_end = iv->endpoint(t_end);
      const double stretch_end = (endpoint_end - iv->x_left) / (iv->s0 - iv->x_left);
      const double hx_end = quad.h * stretch_end;
      const double bw_end = brownian(nt - 1, p);
      for (int i = 0; i < nx; ++i) {
        Vec x(1);
        x[0] = iv->x_left + (quad.reference[i] - iv->x_left) * stretch_end;
        const double wx = (i == 0 || i == nx - 1) ? hx_end / 2 : hx_end;
        const double uval = solution.value(t_end, x, bw_end);
        m2 += wx * a * lambda * std::exp(c0) * std::exp(-2 * lambda * log_sigma_a) * sq(uval);
      }
    }

    margins[p] = rhs + m1 + m2 + m3 + m4 + n1 + n2 - lhs_mass - lhs_grad;
    acc_lhs_mass += lhs_mass;
    acc_lhs_grad += lhs_grad;
    acc_rhs += rhs;
    acc_m1 += m1;
    acc_m2 += m2;
    acc_m3 += m3;
    acc_m4 += m4;
    acc_n1 += n1;
    acc_n2 += n2;
  }

  rep.lhs_mass = acc_lhs_mass / n_paths;
  rep.lhs_gradient = acc_lhs_grad / n_paths;
  rep.rhs_source = acc_rhs / n_paths;
  rep.m_initial_gradient = acc_m1 / n_paths;
  rep.m_focal_mass = acc_m2 / n_paths;
  rep.m_initial_mass = acc_m3 / n_paths;
  rep.m_boundary_flux = acc_m4 / n_paths;
  rep.n_noise_mass = acc_n1 / n_paths;
  rep.n_noise_gradient = acc_n2 / n_paths;
  rep.margin = margins.mean();
  const double var = std::max(0.0, margins.array().square().mean() - sq(rep.margin));
  rep.margin_stderr = n_paths > 1 ? std::sqrt(var / n_paths) : 0.0;
  return rep;
}

// --- two-sphere one-cylinder ---------------------------------------------------------

void TwoSphereParams::validate(const GeometryParams& g) const {
  const double cap = clipped
                         ? std::min(g.interior_ball_radius, 1.0 / std::sqrt(2 * std::exp(1.0)))
                         : std::min({std::sqrt(focal_time), g.interior_ball_radius,
                                     1.0 / std::sqrt(2 * std::exp(1.0))});
  if (!(small_radius > 0 && small_radius <= middle_radius &&
        middle_radius <= g.two_sphere_ratio * large_radius))
    throw invalid_input("TwoSphereParams: need 0 < r <= rho <= eta1 R");
  if (!(large_radius <= cap + 1e-12))
    throw invalid_input("TwoSphereParams: R exceeds min{sqrt(t0), R0, 1/sqrt(2e)}");
}

TwoSphereReport measure_two_sphere(const EnsembleField& field, const TwoSphereParams& p) {
  TwoSphereReport r;
  r.params = p;
  r.local = functionals::sphere_mass(field, p.focal_time, p.center, p.small_radius);
  r.middle = functionals::sphere_mass(field, p.focal_time, p.center, p.middle_radius);
  r.energy =
      functionals::cylinder_energy(field, p.focal_time, p.center, p.large_radius, p.clipped);
  return r;
}

double TwoSphereFit::theta(const TwoSphereParams& p) const {
  return 1.0 / (c_exp * std::log(p.large_radius / p.small_radius));
}

double TwoSphereFit::bound(const TwoSphereReport& r) const {
  const auto& p = r.params;
  const double th = theta(p);
  return c_mult * (p.large_radius / p.middle_radius) *
         std::pow(std::abs(std::log(p.middle_radius)), 1.5) *
         std::pow(r.energy.value, 1 - th) * std::pow(r.local.value, th);
}

namespace {

bool report_usable(const TwoSphereReport& r) {
  return r.local.value > 3 * r.local.stderr_mc && r.local.value > 0 && r.energy.value > 0 &&
         r.middle.value > 0;
}

double needed_multiplier(const std::vector<const TwoSphereReport*>& reports, double c_exp) {
  double needed = 0;
  for (const auto* r : reports) {
    const auto& p = r->params;
    const double th = 1.0 / (c_exp * std::log(p.large_radius / p.small_radius));
    const double denom = (p.large_radius / p.middle_radius) *
                         std::pow(std::abs(std::log(p.middle_radius)), 1.5) *
                         std::pow(r->energy.value, 1 - th) * std::pow(r->local.value, th);
    if (denom > 0) needed = std::max(needed, r->middle.value / denom);
  }
  return needed;
}

}  // namespace

TwoSphereFit two_sphere_fit(const std::vector<TwoSphereReport>& sweep) {
  std::vector<const TwoSphereReport*> usable;
  for (const auto& r : sweep)
    if (report_usable(r)) usable.push_back(&r);
  if (usable.size() < 3)
    throw invalid_input("two_sphere_fit: insufficient data (need >= 3 usable radius triples)");

  // Single-constant resolution: the required multiplier is nonincreasing in
  // the exponent constant, so minimize max(required multiplier, C) on a log
  // grid and report the crossing.
  const int grid_points = 600;
  double best_obj = INFINITY, best_c = 1.0;
  for (int i = 0; i < grid_points; ++i) {
    const double c =
        std::exp(std::log(5e-2) + (std::log(1e4) - std::log(5e-2)) * i / (grid_points - 1));
    const double obj = std::max(needed_multiplier(usable, c), c);
    if (obj < best_obj - 1e-15) {
      best_obj = obj;
      best_c = c;
    }
  }
  TwoSphereFit fit;
  fit.c_exp = best_c;
  fit.c_mult = needed_multiplier(usable, best_c);
  fit.used_reports = static_cast<int>(usable.size());
  return fit;
}

TwoSphereValidation two_sphere_validate(const TwoSphereFit& fit,
                                        const std::vector<TwoSphereReport>& holdout) {
  TwoSphereValidation v;
  for (const auto& r : holdout) {
    if (!report_usable(r)) continue;
    ++v.checked;
    const double th = fit.theta(r.params);
    const double bound = fit.bound(r);
    const double bound_stderr =
        bound * std::sqrt(sq(th * r.local.stderr_mc / std::max(r.local.value, 1e-300)) +
                          sq((1 - th) * r.energy.stderr_mc / std::max(r.energy.value, 1e-300)));
    const double lhs = r.middle.value, lhs_stderr = r.middle.stderr_mc;
    if (lhs - 3 * lhs_stderr > bound + 3 * bound_stderr) ++v.violations;
    v.worst_slack = std::min(v.worst_slack, (bound - lhs) / std::max(bound, 1e-300));
  }
  return v;
}

// --- SUCP probe ---------------------------------------------------------------------

SucpReport sucp_probe(const EnsembleField& field, double t0, const Vec& x0,
                      const std::vector<double>& radii) {
  if (radii.size() < 2) throw invalid_input("sucp_probe: need at least two radii");
  SucpReport rep;
  rep.radii.resize(radii.size());
  rep.masses.resize(radii.size());
  rep.stderrs.resize(radii.size());
  std::vector<double> lr, lm;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    const auto est = functionals::sphere_mass(field, t0, x0, radii[i]);
    rep.radii[i] = radii[i];
    rep.masses[i] = sq(est.value);                   // E int u^2
    rep.stderrs[i] = 2 * est.value * est.stderr_mc;  // delta method
    if (rep.masses[i] > 3 * rep.stderrs[i] && rep.masses[i] > 0) {
      lr.push_back(std::log(radii[i]));
      lm.push_back(std::log(rep.masses[i]));
    }
  }
  if (lr.size() < 2) {
    rep.conclusive = false;
    return rep;
  }
  Vec x(lr.size()), y(lr.size());
  for (std::size_t i = 0; i < lr.size(); ++i) {
    x[i] = lr[i];
    y[i] = lm[i];
  }
  const LinearFit f = fit_line(x, y);
  rep.slope = f.slope;
  rep.vanishing_order = (f.slope - field.grid.dim()) / 2.0;
  rep.conclusive = true;
  return rep;
}

// --- iteration lemma -------------------------------------------------------------------

double geometric_iteration_bound(const IterationState& st) {
  if (!(st.c1 > 1.0)) throw invalid_input("geometric_iteration_bound: need C1 > 1");
  if (!(st.s > 0 && st.s < 1)) throw invalid_input("geometric_iteration_bound: need s in (0,1)");
  if (!(st.x1 > 0)) throw invalid_input("geometric_iteration_bound: need x1 > 0");
  if (st.n < 1) throw invalid_input("geometric_iteration_bound: need n >= 1");
  return std::pow(st.c1, 1.0 / (1.0 - st.s)) * std::pow(st.x1, std::pow(st.s, st.n - 1));
}

namespace {

struct Rational {
  __int128 num = 0, den = 1;

  static __int128 gcd(__int128 a, __int128 b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b) {
      const __int128 t = a % b;
      a = b;
      b = t;
    }
    return a;
  }
  static Rational make(__int128 n, __int128 d) {
    if (d < 0) {
      n = -n;
      d = -d;
    }
    const __int128 g = gcd(n, d);
    return Rational{g ? n / g : n, g ? d / g : d};
  }
  bool operator>=(const Rational& o) const { return num * o.den >= o.num * den; }
};

}  // namespace

bool iteration_bound_dominates_exact(long long px, long long qx, long long pc,
                                     long long qc, long long ps, long long qs, int n) {
  if (qx <= 0 || qc <= 0 || qs <= 0 || px <= 0)
    throw invalid_input("iteration_bound_dominates_exact: positive rationals required");
  if (!(pc > qc)) throw invalid_input("iteration_bound_dominates_exact: need C1 > 1");
  if (!(ps > 0 && ps < qs))
    throw invalid_input("iteration_bound_dominates_exact: need s in (0,1)");
  if (n < 1 || n > 30 || qs > 16)
    throw invalid_input("iteration_bound_dominates_exact: arguments outside the exact range");

  // Both sides carry the common factor x1^{s^{n-1}}; with C1 > 1, domination
  // is the exponent comparison 1/(1-s) >= (1 - s^{n-1})/(1 - s). Closed-form
  // rationals keep every intermediate inside 128 bits for qs <= 16, n <= 30.
  __int128 ps_pow = 1, qs_pow = 1;
  for (int j = 0; j < n - 1; ++j) {
    ps_pow *= ps;
    qs_pow *= qs;
  }
  const Rational geometric_sum =
      Rational::make(static_cast<__int128>(qs) * (qs_pow - ps_pow),
                     qs_pow * static_cast<__int128>(qs - ps));
  const Rational closed = Rational::make(qs, qs - ps);  // 1/(1-s)
  return closed >= geometric_sum;
}

// --- cone chains -------------------------------------------------------------------------

double ConeChain::mu(int k) const { return mu1 * std::pow(contraction, k - 1); }
double ConeChain::rho(int k) const { return rho1 * std::pow(contraction, k - 1); }
Vec ConeChain::center(int k) const { return apex + mu(k) * axis; }

ConeChain cone_chain_build(const Vec& apex, const Vec& axis, const GeometryParams& g,
                           double sigma_tilde) {
  g.validate();
  const double axis_norm = axis.norm();
  if (!(axis_norm > 0)) throw invalid_input("cone_chain_build: zero-length axis");
  ConeChain chain;
  chain.apex = apex;
  chain.axis = axis / axis_norm;
  chain.params = g;
  const double sin_a = std::sin(g.cone_aperture);
  chain.mu1 = g.cone_radius / (1 + sin_a);
  chain.rho1 = g.two_sphere_ratio * chain.mu1 * sin_a / (4 * g.speed_bound);
  const double z = g.two_sphere_ratio * sin_a / (4 * g.speed_bound);
  chain.contraction = (1 - z) / (1 + z);
  chain.sigma_tilde = sigma_tilde;
  const double gap1 = chain.mu1 - chain.rho1;
  if (!(sigma_tilde > 0 && sigma_tilde < gap1))
    throw invalid_input("cone_chain_build: need 0 < sigma_tilde < mu1 - rho1");
  int k = 1;
  while (chain.mu(k) - chain.rho(k) >= sigma_tilde) {
    ++k;
    if (k > 1000000) throw numerical_error("cone_chain_build: runaway chain");
  }
  chain.k_bar = k;
  return chain;
}

bool cone_chain_nesting_ok(const ConeChain& chain, double tol) {
  const double sin_a = std::sin(chain.params.cone_aperture);
  const double eta1 = chain.params.two_sphere_ratio;
  const double speed = chain.params.speed_bound;
  for (int k = 1; k <= chain.k_bar; ++k) {
    const double shift = chain.mu(k) - chain.mu(k + 1);  // |w_k - w_{k+1}|
    const double scale = std::max(1.0, chain.rho(k));
    if (shift + chain.rho(k + 1) > 3 * chain.rho(k) + tol * scale) return false;
    if (3 * chain.rho(k) > 4 / eta1 * chain.rho(k) + tol * scale) return false;
    const double outer = 4 / eta1 * speed * chain.rho(k);
    // Ball-in-cone: tangency radius mu_k sin(alpha), plus the rho0 cap.
    if (outer > chain.mu(k) * sin_a + tol * scale) return false;
    if (chain.mu(k) + outer > chain.params.cone_radius * (1 + tol)) return false;
  }
  return true;
}

bool cone_chain_kbar_in_bracket(const ConeChain& chain) {
  const double gap1 = chain.mu1 - chain.rho1;
  const double l = (std::log(chain.sigma_tilde) - std::log(gap1)) / std::log(chain.contraction);
  return chain.k_bar + 1e-9 >= l + 1 && chain.k_bar <= l + 2 + 1e-9;
}

// --- small propagation --------------------------------------------------------------------

namespace {

// Smallest C >= 1 with C kappa0^C |ln sigma|^{-alpha/C} >= value (the right
// side is increasing in C once sigma <= 1/e; a doubling scan guards the rest).
double fit_propagation_constant(double value, double kappa0, double alpha, double sigma) {
  const double lls = std::abs(std::log(sigma));
  auto rhs = [&](double c) {
    return std::log(c) + c * std::log(kappa0) - alpha / c * std::log(lls);
  };
  const double target = std::log(std::max(value, 1e-300));
  double lo = 1.0, hi = 1.0;
  if (rhs(lo) >= target) return lo;
  while (rhs(hi) < target && hi < 1e4) hi *= 2;
  if (rhs(hi) < target) return hi;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (rhs(mid) >= target ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace

SmallPropagationReport small_propagation_check(const EnsembleField& field,
                                               const ConeChain& chain, double kappa0) {
  SmallPropagationReport rep;
  const int kbar = chain.k_bar;
  rep.chain_masses.resize(kbar);
  rep.chain_stderrs.resize(kbar);
  const double t_last = field.slice_times.back();
  for (int k = 1; k <= kbar; ++k) {
    const auto est = functionals::sphere_mass(field, t_last, chain.center(k), chain.rho(k));
    rep.chain_masses[k - 1] = sq(est.value);
    rep.chain_stderrs[k - 1] = 2 * est.value * est.stderr_mc;
  }
  rep.sigma_local = rep.chain_masses[0];
  if (!(rep.sigma_local > 0) || rep.sigma_local >= 0.99 ||
      rep.sigma_local < 3 * rep.chain_stderrs[0]) {
    rep.informative = false;
  }

  // Per-step smallness m_{k+1} <= C kappa0^2 m_k^s, fitted in logs.
  std::vector<double> xs, ys;
  for (int k = 0; k + 1 < kbar; ++k)
    if (rep.chain_masses[k] > 0 && rep.chain_masses[k + 1] > 0) {
      xs.push_back(std::log(rep.chain_masses[k]));
      ys.push_back(std::log(rep.chain_masses[k + 1]) - 2 * std::log(kappa0));
    }
  if (xs.size() >= 2) {
    Vec x(xs.size()), y(ys.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      x[i] = xs[i];
      y[i] = ys[i];
    }
    const LinearFit f = fit_line(x, y);
    rep.step_exponent = std::min(0.99, std::max(0.01, f.slope));
    rep.step_constant = std::exp(f.intercept);
  } else {
    rep.step_exponent =
        std::min(0.99, 1.0 / std::log(4 / chain.params.two_sphere_ratio));
    rep.step_constant = 1.0;
  }

  // Iteration-lemma majorant of the last chain mass; the C^1 surface terms
  // then carry it to the boundary point.
  const double s = rep.step_exponent;
  const double ctot = std::max(rep.step_constant, 1.0 + 1e-9) * sq(kappa0);
  const double chain_bound =
      std::pow(ctot, 1.0 / (1.0 - s)) *
      std::pow(std::max(rep.sigma_local, 1e-300), std::pow(s, kbar - 1));
  const double rho_last = chain.rho(kbar);
  const double ball_volume = field.grid.dim() == 1 ? 2 * rho_last : kPi * sq(rho_last);
  rep.lemma_bound =
      chain_bound / ball_volume + sq(kappa0) * (sq(rho_last) + sq(chain.sigma_tilde));

  // Boundary value at the apex.
  const int si = static_cast<int>(field.slice_times.size()) - 1;
  Vec per_path(field.paths);
  for (int p = 0; p < field.paths; ++p)
    per_path[p] = sq(field.eval_physical(si, p, chain.apex));
  rep.boundary_value = per_path.mean();
  const double var = std::max(0.0, per_path.array().square().mean() - sq(rep.boundary_value));
  rep.boundary_stderr = std::sqrt(var / field.paths);

  if (rep.informative)
    rep.fitted_constant = fit_propagation_constant(rep.boundary_value, kappa0,
                                                   chain.params.cone_aperture, rep.sigma_local);
  return rep;
}

}  // namespace spdelab::verify
