#include "spdelab/functionals.hpp"

#include <cmath>

namespace spdelab::functionals {

bool ObservationWindow::contains(const Vec& x) const {
  for (int i = 0; i < x.size(); ++i)
    if (x[i] < lo[i] || x[i] > hi[i]) return false;
  return true;
}

bool window_inside(const ObservationWindow& w, const solver::MovingDomain& domain,
                   int time_samples) {
  const int dim = static_cast<int>(w.lo.size());
  for (int k = 0; k <= time_samples; ++k) {
    const double t = w.t_end * k / time_samples;
    const int per_axis = 8;
    if (dim == 1) {
      for (int i = 0; i <= per_axis; ++i) {
        Vec x(1);
        x[0] = w.lo[0] + (w.hi[0] - w.lo[0]) * i / per_axis;
        if (!domain.contains(t, x)) return false;
      }
    } else {
      for (int i = 0; i <= per_axis; ++i)
        for (int j = 0; j <= per_axis; ++j) {
          Vec x(2);
          x[0] = w.lo[0] + (w.hi[0] - w.lo[0]) * i / per_axis;
          x[1] = w.lo[1] + (w.hi[1] - w.lo[1]) * j / per_axis;
          if (!domain.contains(t, x)) return false;
        }
    }
  }
  return true;
}

namespace {

struct QuadPoint {
  Vec x;
  double weight;
};

std::vector<QuadPoint> box_quadrature(const ObservationWindow& w) {
  std::vector<QuadPoint> pts;
  const int dim = static_cast<int>(w.lo.size());
  if (dim == 1) {
    const double h = (w.hi[0] - w.lo[0]) / w.quad_points;
    for (int i = 0; i < w.quad_points; ++i) {
      Vec x(1);
      x[0] = w.lo[0] + (i + 0.5) * h;
      pts.push_back({x, h});
    }
    return pts;
  }
  const double hx = (w.hi[0] - w.lo[0]) / w.quad_points;
  const double hy = (w.hi[1] - w.lo[1]) / w.quad_points;
  for (int i = 0; i < w.quad_points; ++i)
    for (int j = 0; j < w.quad_points; ++j) {
      Vec x(2);
      x[0] = w.lo[0] + (i + 0.5) * hx;
      x[1] = w.lo[1] + (j + 0.5) * hy;
      pts.push_back({x, hx * hy});
    }
  return pts;
}

void require_matched(const EnsembleField& u1, const EnsembleField& u2) {
  const bool matched = u1.paths == u2.paths && u1.time_grid.size() == u2.time_grid.size() &&
                       u1.time_grid == u2.time_grid && u1.slice_times == u2.slice_times;
  if (!matched)
    throw invalid_input("observation functionals: fields live on mismatched grids");
}

void require_coupled(const EnsembleField& u1, const EnsembleField& u2) {
  require_matched(u1, u2);
  if (u1.base_seed != u2.base_seed)
    throw invalid_input(
        "observation_gap: fields are not coupled (seed, paths and stored slices "
        "must match so both solutions ride the same noise)");
}

Estimate windowed_gap(const EnsembleField& u1, const EnsembleField& u2,
                      const ObservationWindow& w) {
  const auto quad = box_quadrature(w);
  const int n = u1.paths;

  Estimate best;  // sup over slices of the per-slice estimate
  bool any = false;
  Vec per_path(n);
  for (std::size_t si = 0; si < u1.slice_times.size(); ++si) {
    const double t = u1.slice_times[si];
    if (t <= w.t_begin + 1e-15 || t > w.t_end + 1e-12) continue;
    per_path.setZero();
    for (const auto& q : quad) {
      const Vec y1 = u1.domain.backward(t, q.x);
      const Vec y2 = u2.domain.backward(t, q.x);
      const Mat& s1 = u1.slices[si];
      const Mat& s2 = u2.slices[si];
      for (int p = 0; p < n; ++p) {
        const double d = u1.grid.interpolate(s1.col(p), y1) -
                         u2.grid.interpolate(s2.col(p), y2);
        per_path[p] += q.weight * d * d;
      }
    }
    const double mean = per_path.mean();
    if (!any || mean > best.value) {
      any = true;
      best.value = mean;
      const double var =
          std::max(0.0, per_path.array().square().mean() - mean * mean);
      best.stderr_mc = std::sqrt(var / n);
    }
  }
  if (!any) throw invalid_input("observation_gap: no stored slice falls in the window");
  return best;
}

}  // namespace

Estimate observation_gap(const EnsembleField& u1, const EnsembleField& u2,
                         const ObservationWindow& w) {
  require_coupled(u1, u2);
  return windowed_gap(u1, u2, w);
}

Estimate observation_misfit(const EnsembleField& u1, const EnsembleField& u2,
                            const ObservationWindow& w) {
  require_matched(u1, u2);
  return windowed_gap(u1, u2, w);
}

namespace {

// Cell-center inclusion with half-cell correction: the rim cell carries its
// linear partial volume (1/2 exactly on the sphere), which keeps the
// grid-ball intersection second-order consistent.
double ball_weight(double dist, double radius, double cell) {
  return std::min(1.0, std::max(0.0, 0.5 + (radius - dist) / cell));
}

Estimate sqrt_of_mean(const Vec& per_path) {
  const int n = static_cast<int>(per_path.size());
  const double mean = per_path.mean();
  const double var = std::max(0.0, per_path.array().square().mean() - mean * mean);
  const double se_mean = std::sqrt(var / n);
  Estimate e;
  e.value = std::sqrt(std::max(0.0, mean));
  e.stderr_mc = e.value > 0 ? se_mean / (2 * e.value) : std::sqrt(se_mean);
  return e;
}

}  // namespace

Estimate sphere_mass(const EnsembleField& u, double t0, const Vec& x0, double r) {
  if (!(r > 0)) throw invalid_input("sphere_mass: radius must be positive");
  const int si = u.slice_near(t0);
  const double t = u.slice_times[si];
  const Mat pts = solver::physical_points(u.domain, u.grid, t);
  const Vec w = solver::physical_weights(u.domain, u.grid, t);
  const double dimroot = 1.0 / u.grid.dim();

  Vec mask = Vec::Zero(u.grid.node_count());
  bool nonempty = false;
  for (int i = 0; i < u.grid.node_count(); ++i) {
    const double cell = std::pow(w[i], dimroot);
    const double bw = ball_weight((pts.col(i) - x0).norm(), r, cell);
    if (bw > 0) {
      mask[i] = bw * w[i];
      nonempty = true;
    }
  }
  if (!nonempty) throw invalid_input("sphere_mass: ball does not meet the domain");

  const Mat& slice = u.slices[si];
  Vec per_path(u.paths);
  for (int p = 0; p < u.paths; ++p)
    per_path[p] = (slice.col(p).array().square() * mask.array()).sum();
  return sqrt_of_mean(per_path);
}

Estimate cylinder_energy(const EnsembleField& u, double t0, const Vec& x0, double R,
                         bool clipped) {
  if (!(R > 0)) throw invalid_input("cylinder_energy: radius must be positive");
  const double t_lo = clipped ? std::max(0.0, t0 - R * R) : t0 - R * R;
  Vec per_path = Vec::Zero(u.paths);
  double prev_t = t_lo;
  bool any = false;
  for (std::size_t si = 0; si < u.slice_times.size(); ++si) {
    const double t = u.slice_times[si];
    if (t <= t_lo + 1e-15 || t > t0 + 1e-12) continue;
    const double dt_w = t - prev_t;
    prev_t = t;
    const Mat pts = solver::physical_points(u.domain, u.grid, t);
    const Vec w = solver::physical_weights(u.domain, u.grid, t);
    const double dimroot = 1.0 / u.grid.dim();
    Vec mask = Vec::Zero(u.grid.node_count());
    for (int i = 0; i < u.grid.node_count(); ++i) {
      const double cell = std::pow(w[i], dimroot);
      const double bw = ball_weight((pts.col(i) - x0).norm(), R, cell);
      if (bw > 0) mask[i] = bw * w[i];
    }
    const Mat& slice = u.slices[si];
    for (int p = 0; p < u.paths; ++p)
      per_path[p] += dt_w * (slice.col(p).array().square() * mask.array()).sum();
    any = true;
  }
  if (!any) throw invalid_input("cylinder_energy: no stored slice inside the cylinder");
  per_path /= R * R;
  return sqrt_of_mean(per_path);
}

}  // namespace spdelab::functionals
