#include "spdelab/weights.hpp"

#include <cmath>
#include <cstdio>

namespace spdelab::weights {

namespace {

// (1 - e^{-u^2})/u^2, the integrand after t = e^{-1/u}; series near 0 to
// dodge cancellation.
double regular_integrand(double u) {
  if (std::abs(u) < 1e-4) {
    const double u2 = u * u;
    return 1.0 - u2 / 2.0 + u2 * u2 / 6.0;
  }
  return -std::expm1(-u * u) / (u * u);
}

double simpson(double (*f)(double), double a, double b) {
  return (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
}

double adaptive_simpson(double (*f)(double), double a, double b, double whole,
                        double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double left = simpson(f, a, m);
  const double right = simpson(f, m, b);
  if (depth <= 0 || std::abs(left + right - whole) <= 15 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, a, m, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, right, 0.5 * tol, depth - 1);
}

// int_0^w (1 - e^{-u^2})/u^2 du
double regular_integral(double w, double tol) {
  if (w <= 0) return 0.0;
  return adaptive_simpson(regular_integrand, 0.0, w, simpson(regular_integrand, 0.0, w),
                          tol, 48);
}

void require_sigma_domain(double s) {
  if (!(s > 0.0 && s <= kInvE + 1e-15))
    throw domain_error("sigma: argument must lie in (0, 1/e]");
}

}  // namespace

double sigma(double s, double tol) {
  require_sigma_domain(s);
  return s * std::exp(-regular_integral(-1.0 / std::log(s), tol));
}

double sigma_derivative(double s, double tol) {
  require_sigma_domain(s);
  const double ls = std::log(s);
  return (sigma(s, tol) / s) * std::exp(-1.0 / (ls * ls));
}

double compute_c0_quadrature(double tol) { return regular_integral(1.0, tol); }

SigmaTable SigmaTable::build(int nodes, double s_min) {
  if (nodes < 8 || !(s_min > 0) || !(s_min < kInvE))
    throw invalid_input("SigmaTable::build: bad arguments");
  SigmaTable t;
  t.s_min_ = s_min;
  t.grid_.resize(nodes);
  t.values_.resize(nodes);
  t.derivatives_.resize(nodes);
  const double l0 = std::log(s_min), l1 = std::log(kInvE);
  // Accumulate the regularized integral segment by segment along the grid.
  double acc = 0.0, prev_w = 0.0;
  for (int i = 0; i < nodes; ++i) {
    const double s = std::exp(l0 + (l1 - l0) * i / (nodes - 1));
    const double w = -1.0 / std::log(s);
    acc += adaptive_simpson(regular_integrand, prev_w, w,
                            simpson(regular_integrand, prev_w, w), 1e-14, 40);
    prev_w = w;
    t.grid_[i] = s;
    t.values_[i] = s * std::exp(-acc);
    const double ls = std::log(s);
    t.derivatives_[i] = std::exp(-acc) * std::exp(-1.0 / (ls * ls));
  }
  t.c0_ = acc;  // integral up to w = 1, i.e. s = 1/e
  return t;
}

double SigmaTable::value(double s) const {
  require_sigma_domain(s);
  if (s <= s_min_) {
    // Below the table: sigma(s) = s exp(-I(w)) with I(w) = w - w^3/6 + O(w^5).
    const double w = -1.0 / std::log(s);
    return s * std::exp(-(w - w * w * w / 6.0));
  }
  const double l0 = std::log(s_min_), l1 = std::log(kInvE);
  const int n = static_cast<int>(grid_.size());
  const double pos = (std::log(s) - l0) / (l1 - l0) * (n - 1);
  const int i = std::min(n - 2, std::max(0, static_cast<int>(pos)));
  const double h = grid_[i + 1] - grid_[i];
  const double u = (s - grid_[i]) / h;
  // Cubic Hermite with exact nodal derivatives.
  const double h00 = (1 + 2 * u) * (1 - u) * (1 - u);
  const double h10 = u * (1 - u) * (1 - u);
  const double h01 = u * u * (3 - 2 * u);
  const double h11 = u * u * (u - 1);
  return h00 * values_[i] + h10 * h * derivatives_[i] + h01 * values_[i + 1] +
         h11 * h * derivatives_[i + 1];
}

double SigmaTable::derivative(double s) const {
  require_sigma_domain(s);
  const double ls = std::log(s);
  return (value(s) / s) * std::exp(-1.0 / (ls * ls));
}

double compute_c0(const SigmaTable& table) {
  return -std::log(table.value(kInvE) / kInvE);
}

std::string sigma_table_csv(const SigmaTable& table) {
  std::string out = "s,sigma,sigma_prime\n";
  char buf[96];
  for (int i = 0; i < table.grid().size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", table.grid()[i],
                  table.values()[i], table.derivatives()[i]);
    out += buf;
  }
  return out;
}

double sigma_ode_residual(const SigmaTable& table, double s) {
  const double ls = std::log(s);
  return std::log(table.value(s) / (s * table.derivative(s))) - 1.0 / (ls * ls);
}

void CarlemanWeights::validate() const {
  if (!(time_shift > 0)) throw invalid_input("CarlemanWeights: time shift a must be positive");
  if (!(lookback > 0 && lookback <= focal_time))
    throw invalid_input("CarlemanWeights: lookback b must lie in (0, t0]");
  if (!(strength >= 1.0)) throw invalid_input("CarlemanWeights: lambda must be >= 1");
  if (time_shift + lookback > kInvE + 1e-12)
    throw invalid_input("CarlemanWeights: a + b must not exceed 1/e");
  if (!sigma) throw invalid_input("CarlemanWeights: sigma table missing");
}

double CarlemanWeights::sigma_a(double t) const {
  const double s = shifted_time(t);
  if (!(t <= focal_time + 1e-12 && t >= focal_time - lookback - 1e-12))
    throw domain_error("CarlemanWeights: t outside [t0 - b, t0]");
  return sigma->value(s);
}

std::shared_ptr<const SigmaTable> shared_sigma_table() {
  static std::shared_ptr<const SigmaTable> table = [] {
    return std::make_shared<const SigmaTable>(SigmaTable::build());
  }();
  return table;
}

double phi(double t, const Vec& x, const CarlemanWeights& w) {
  const double s = w.shifted_time(t);
  if (!(t <= w.focal_time + 1e-12 && t >= w.focal_time - w.lookback - 1e-12))
    throw domain_error("phi: t outside [t0 - b, t0]");
  return -(x - w.focal_point).squaredNorm() / (8.0 * s) - w.strength * std::log(w.sigma->value(s));
}

Vec phi_gradient(double t, const Vec& x, const CarlemanWeights& w) {
  return -(x - w.focal_point) / (4.0 * w.shifted_time(t));
}

double phi_laplacian(double t, int dim, const CarlemanWeights& w) {
  return -dim / (4.0 * w.shifted_time(t));
}

bool level_set_membership(double t, const Vec& x, double rho, const CarlemanWeights& w) {
  if (!(rho > 0)) throw invalid_input("level_set_membership: rho must be positive");
  if (t > w.focal_time) return false;
  const double s = w.shifted_time(t);
  const double lhs = (x - w.focal_point).squaredNorm() / (8.0 * w.strength * s) + std::log(s);
  return lhs < std::log(rho * rho / (8.0 * w.strength));
}

WeightBoundsReport weight_bounds_check(const CarlemanWeights& w, double rho, int k,
                                       int time_samples, int space_samples) {
  w.validate();
  if (!(rho > 0) || k < 0 || k > 2)
    throw invalid_input("weight_bounds_check: need rho > 0 and k in {0,1,2}");
  const double lambda = w.strength;
  // By the level-set consequences, members of D_{2rho,a} satisfy
  // |x-x0| < e^{-1/2} * 2 rho and t > t0 + a - (2rho)^2/(8 lambda).
  const double x_span = 2.0 * rho;
  const double t_lo = std::max(w.focal_time - w.lookback,
                               w.focal_time + w.time_shift - sq(2 * rho) / (8 * lambda) - 1e-15);
  WeightBoundsReport rep;
  double inner_min = INFINITY, annulus_max = -INFINITY;
  const double inner_ref = lambda * std::log(8.0 * lambda / (rho * rho));
  const double annulus_ref = std::log(lambda / (rho * rho));
  for (int it = 0; it <= time_samples; ++it) {
    const double t = t_lo + (w.focal_time - t_lo) * it / time_samples;
    for (int ix = 0; ix <= space_samples; ++ix) {
      // Radial sweep suffices: phi and the level sets depend on |x - x0| only.
      Vec x = w.focal_point;
      x[0] += -x_span + 2.0 * x_span * ix / space_samples;
      const bool in_inner = level_set_membership(t, x, rho, w);
      const bool in_outer = level_set_membership(t, x, 2 * rho, w);
      if (!in_outer) continue;
      const double p = phi(t, x, w);
      if (in_inner) {
        ++rep.inner_samples;
        inner_min = std::min(inner_min, p - inner_ref);
      } else {
        ++rep.annulus_samples;
        const double s = w.shifted_time(t);
        annulus_max = std::max(annulus_max, (-k * std::log(s) + p - (lambda + k) * annulus_ref) / lambda);
      }
    }
  }
  if (rep.inner_samples == 0 || rep.annulus_samples == 0)
    throw invalid_input("weight_bounds_check: empty sample set");
  rep.min_log_margin_inner = inner_min;
  rep.inner_bound_holds = inner_min >= -1e-9;
  rep.fitted_log_c = annulus_max;
  rep.fitted_c = std::exp(annulus_max);
  return rep;
}

Mollifier Mollifier::between(double lo, double hi, int table_nodes) {
  if (!(lo < hi)) throw invalid_input("Mollifier: need lo < hi");
  if (table_nodes < 16) throw invalid_input("Mollifier: table too small");
  Mollifier m;
  m.lo_ = lo;
  m.hi_ = hi;
  m.grid_.resize(table_nodes);
  m.cumulative_.resize(table_nodes);
  // Composite Simpson prefix integral of the bump; the bump vanishes to all
  // orders at both endpoints, so uniform nodes behave well.
  m.normalization_ = 1.0;  // so bump() is usable during table construction
  double acc = 0;
  m.grid_[0] = lo;
  m.cumulative_[0] = 0;
  for (int i = 1; i < table_nodes; ++i) {
    const double a = lo + (hi - lo) * (i - 1) / (table_nodes - 1);
    const double b = lo + (hi - lo) * i / (table_nodes - 1);
    acc += (b - a) / 6.0 * (m.bump(a) + 4.0 * m.bump(0.5 * (a + b)) + m.bump(b));
    m.grid_[i] = b;
    m.cumulative_[i] = acc;
  }
  m.normalization_ = acc;
  return m;
}

double Mollifier::bump(double tau) const {
  if (tau <= lo_ || tau >= hi_) return 0.0;
  const double width = hi_ - lo_;
  return std::exp(-width * width / ((tau - lo_) * (hi_ - tau)));
}

double Mollifier::value(double tau) const {
  if (tau <= lo_) return 1.0;
  if (tau >= hi_) return 0.0;
  const int n = static_cast<int>(grid_.size());
  const double pos = (tau - lo_) / (hi_ - lo_) * (n - 1);
  const int i = std::min(n - 2, std::max(0, static_cast<int>(pos)));
  const double h = grid_[i + 1] - grid_[i];
  const double u = (tau - grid_[i]) / h;
  // Hermite on the cumulative, derivative = bump (exact).
  const double h00 = (1 + 2 * u) * (1 - u) * (1 - u);
  const double h10 = u * (1 - u) * (1 - u);
  const double h01 = u * u * (3 - 2 * u);
  const double h11 = u * u * (u - 1);
  const double cum = h00 * cumulative_[i] + h10 * h * bump(grid_[i]) +
                     h01 * cumulative_[i + 1] + h11 * h * bump(grid_[i + 1]);
  return 1.0 - cum / normalization_;
}

double Mollifier::derivative(double tau) const { return -bump(tau) / normalization_; }

double Mollifier::second_derivative(double tau) const {
  if (tau <= lo_ || tau >= hi_) return 0.0;
  const double width = hi_ - lo_;
  const double prod = (tau - lo_) * (hi_ - tau);
  const double dprod = (hi_ + lo_ - 2 * tau);
  return -bump(tau) * width * width * dprod / (prod * prod) / normalization_;
}

SpaceTimeCutoff::SpaceTimeCutoff(const CarlemanWeights& w, double outer_radius)
    : weights_(w),
      outer_radius_(outer_radius),
      profile_(Mollifier::between(
          std::log(sq(outer_radius / 2) / (8.0 * w.strength)),
          std::log(sq(outer_radius) / (8.0 * w.strength)))) {
  if (!(outer_radius > 0)) throw invalid_input("SpaceTimeCutoff: radius must be positive");
}

CutoffEval SpaceTimeCutoff::eval(double t, const Vec& x) const {
  const CarlemanWeights& w = weights_;
  if (!(t <= w.focal_time + 1e-12 && t >= w.focal_time - w.lookback - 1e-12))
    throw domain_error("space_time_cutoff: t outside [t0 - b, t0]");
  const double s = w.shifted_time(t);
  const Vec r = x - w.focal_point;
  const double arg = r.squaredNorm() / (8.0 * w.strength * s) + std::log(s);
  CutoffEval out;
  out.value = profile_.value(arg);
  const double d1 = profile_.derivative(arg);
  const double d2 = profile_.second_derivative(arg);
  out.gradient = d1 * r / (4.0 * w.strength * s);
  out.time_deriv = d1 * (r.squaredNorm() / (8.0 * w.strength * s * s) - 1.0 / s);
  const int n = static_cast<int>(x.size());
  out.laplacian = d2 * r.squaredNorm() / sq(4.0 * w.strength * s) +
                  d1 * n / (4.0 * w.strength * s);
  return out;
}

CutoffEval space_time_cutoff(double t, const Vec& x, const CarlemanWeights& w,
                             double outer_radius) {
  return SpaceTimeCutoff(w, outer_radius).eval(t, x);
}

}  // namespace spdelab::weights
