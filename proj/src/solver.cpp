#include "spdelab/solver.hpp"

#include <Eigen/SparseLU>

#include <cmath>

#include "spdelab/weights.hpp"

namespace spdelab::solver {

using geometry::PullbackDerivatives;

// --- coefficient fields --------------------------------------------------------

ScalarField ScalarField::zero() { return ScalarField{nullptr, 0.0, true}; }

ScalarField ScalarField::constant(double value) {
  return ScalarField{[value](double, const Vec&) { return value; }, std::abs(value), true};
}

Vec VectorField::operator()(double t, const Vec& x) const {
  return fn ? fn(t, x) : Vec::Zero(x.size());
}

VectorField VectorField::zero(int) { return VectorField{nullptr, 0.0, true}; }

VectorField VectorField::constant(Vec value) {
  const double norm = value.norm();
  return VectorField{[v = std::move(value)](double, const Vec&) { return v; }, norm, true};
}

double SPDECoefficients::recompute_q1() const {
  return sq(gradient_drift.bound) + 2.0 * zeroth_order.bound + sq(noise_intensity.bound) + 1.0;
}

double SPDECoefficients::recompute_q2() const {
  return 0.5 * sq(gradient_drift.bound) + zeroth_order.bound + 0.5 * sq(noise_intensity.bound) +
         1.0;
}

SPDECoefficients& SPDECoefficients::finalize() {
  q1 = recompute_q1();
  q2 = recompute_q2();
  return *this;
}

void SPDECoefficients::validate(const MovingDomain& domain, int time_samples) const {
  if (!(regularity_bound >= std::exp(1.0) - 1e-12))
    throw invalid_input("SPDECoefficients: kappa0 must be >= e");
  if (std::abs(q1 - recompute_q1()) > 1e-12 * std::max(1.0, q1) ||
      std::abs(q2 - recompute_q2()) > 1e-12 * std::max(1.0, q2))
    throw invalid_input("SPDECoefficients: stored q1/q2 disagree with the field bounds");
  if (boundary_floor > 0) {
    // Nontrivial-boundary-data condition: ||f(t,.)||^2_Linf(Gamma) >= F at
    // every sampled positive time.
    const double spacing = domain.dim() == 1 ? 0.05 : 0.1;
    for (int k = 1; k <= time_samples; ++k) {
      const double t = domain.horizon() * k / time_samples;
      const auto snap = domain.snapshot(t, spacing);
      double sup = 0;
      for (int j = 0; j < snap.boundary.cols(); ++j) {
        if (snap.moving[j]) continue;
        sup = std::max(sup, std::abs(boundary_data(t, snap.boundary.col(j))));
      }
      if (sq(sup) < boundary_floor - 1e-12)
        throw invalid_input("SPDECoefficients: boundary data does not attain the floor F");
    }
  }
}

// --- grids ----------------------------------------------------------------------

SpatialGrid SpatialGrid::interval(const MovingDomain& domain, int cells) {
  const auto* iv = domain.as_interval();
  if (!iv) throw invalid_input("SpatialGrid::interval: domain is not an interval family");
  if (cells < 4) throw invalid_input("SpatialGrid::interval: need at least 4 cells");
  SpatialGrid g;
  g.dim_ = 1;
  g.spacing_ = (iv->s0 - iv->x_left) / cells;
  g.nodes_.resize(1, cells + 1);
  for (int i = 0; i <= cells; ++i) g.nodes_(0, i) = iv->x_left + i * g.spacing_;
  g.unknown_of_node_.assign(cells + 1, -1);
  for (int i = 1; i < cells; ++i) {
    g.unknown_of_node_[i] = static_cast<int>(g.node_of_unknown_.size());
    g.node_of_unknown_.push_back(i);
  }
  BoundaryRecord left{g.nodes_.col(0), false, 0};
  BoundaryRecord right{g.nodes_.col(cells), iv->moving_endpoint, cells};
  g.boundary_ = {left, right};
  g.stencil_.resize(g.node_of_unknown_.size());
  for (std::size_t u = 0; u < g.node_of_unknown_.size(); ++u) {
    const int i = g.node_of_unknown_[u];
    const int lo = (i - 1 == 0) ? -1 : g.unknown_of_node_[i - 1];
    const int hi = (i + 1 == cells) ? -2 : g.unknown_of_node_[i + 1];
    g.stencil_[u] = {lo, hi, 0, 0};
  }
  g.weights_ = Vec::Constant(cells + 1, g.spacing_);
  g.weights_[0] = g.weights_[cells] = g.spacing_ / 2;
  return g;
}

SpatialGrid SpatialGrid::embedded(const MovingDomain& domain, int cells_per_side) {
  if (domain.dim() != 2) throw invalid_input("SpatialGrid::embedded: need a 2-D family");
  if (cells_per_side < 8) throw invalid_input("SpatialGrid::embedded: grid too coarse");
  // Reference bounding box from the t = 0 boundary.
  const auto snap = domain.snapshot(0.0, 0.05);
  const Eigen::Vector2d lo2 = snap.boundary.rowwise().minCoeff();
  const Eigen::Vector2d hi2 = snap.boundary.rowwise().maxCoeff();
  const double span = std::max(hi2[0] - lo2[0], hi2[1] - lo2[1]);
  SpatialGrid g;
  g.dim_ = 2;
  g.spacing_ = span / cells_per_side;
  g.lattice_lo_ = lo2.array() - g.spacing_;
  g.lattice_nx_ = cells_per_side + 3;
  g.lattice_ny_ = cells_per_side + 3;
  g.lattice_index_.assign(static_cast<std::size_t>(g.lattice_nx_) * g.lattice_ny_, -1);

  std::vector<Eigen::Vector2d> pts;
  for (int i = 0; i < g.lattice_nx_; ++i)
    for (int j = 0; j < g.lattice_ny_; ++j) {
      Vec p(2);
      p[0] = g.lattice_lo_[0] + i * g.spacing_;
      p[1] = g.lattice_lo_[1] + j * g.spacing_;
      if (domain.contains(0.0, p)) {
        g.lattice_index_[i * g.lattice_ny_ + j] = static_cast<int>(pts.size());
        pts.emplace_back(p[0], p[1]);
      }
    }
  g.nodes_.resize(2, static_cast<int>(pts.size()));
  for (int k = 0; k < g.nodes_.cols(); ++k) g.nodes_.col(k) = pts[k];
  g.unknown_of_node_.resize(pts.size());
  g.node_of_unknown_.resize(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    g.unknown_of_node_[k] = static_cast<int>(k);
    g.node_of_unknown_[k] = static_cast<int>(k);
  }

  auto lattice_at = [&](int i, int j) -> int {
    if (i < 0 || j < 0 || i >= g.lattice_nx_ || j >= g.lattice_ny_) return -1;
    return g.lattice_index_[i * g.lattice_ny_ + j];
  };
  // Bisect the boundary crossing between an inside node and an outside
  // lattice neighbor; the reference boundary is static by construction.
  auto crossing = [&](const Vec& in, const Vec& out) {
    Vec a = in, b = out;
    for (int it = 0; it < 40; ++it) {
      Vec mid = 0.5 * (a + b);
      (domain.contains(0.0, mid) ? a : b) = mid;
    }
    return Vec(0.5 * (a + b));
  };

  g.stencil_.resize(pts.size());
  g.diag_.resize(pts.size());
  for (int i = 0; i < g.lattice_nx_; ++i)
    for (int j = 0; j < g.lattice_ny_; ++j) {
      const int id = lattice_at(i, j);
      if (id < 0) continue;
      const std::array<std::array<int, 2>, 4> off = {{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
      for (int d = 0; d < 4; ++d) {
        const int nb = lattice_at(i + off[d][0], j + off[d][1]);
        if (nb >= 0) {
          g.stencil_[id][d] = nb;
        } else {
          Vec outside(2);
          outside[0] = g.lattice_lo_[0] + (i + off[d][0]) * g.spacing_;
          outside[1] = g.lattice_lo_[1] + (j + off[d][1]) * g.spacing_;
          BoundaryRecord rec;
          rec.point = crossing(g.nodes_.col(id), outside);
          rec.moving = domain.reference_boundary_is_moving(rec.point);
          g.stencil_[id][d] = -1 - static_cast<int>(g.boundary_.size());
          g.boundary_.push_back(std::move(rec));
        }
      }
      g.diag_[id] = {lattice_at(i + 1, j + 1), lattice_at(i + 1, j - 1),
                     lattice_at(i - 1, j + 1), lattice_at(i - 1, j - 1)};
    }
  g.weights_ = Vec::Constant(g.nodes_.cols(), sq(g.spacing_));
  return g;
}

double SpatialGrid::interpolate(const Eigen::Ref<const Vec>& nodal_values, const Vec& y) const {
  if (dim_ == 1) {
    const double x0 = nodes_(0, 0);
    const int n = node_count();
    double pos = (y[0] - x0) / spacing_;
    pos = std::min(std::max(pos, 0.0), static_cast<double>(n - 1));
    const int i = std::min(n - 2, static_cast<int>(pos));
    const double u = pos - i;
    return (1 - u) * nodal_values[i] + u * nodal_values[i + 1];
  }
  const double fx = (y[0] - lattice_lo_[0]) / spacing_;
  const double fy = (y[1] - lattice_lo_[1]) / spacing_;
  const int i = static_cast<int>(std::floor(fx));
  const int j = static_cast<int>(std::floor(fy));
  const double u = fx - i, v = fy - j;
  auto lattice_at = [&](int a, int b) -> int {
    if (a < 0 || b < 0 || a >= lattice_nx_ || b >= lattice_ny_) return -1;
    return lattice_index_[a * lattice_ny_ + b];
  };
  const int c00 = lattice_at(i, j), c10 = lattice_at(i + 1, j);
  const int c01 = lattice_at(i, j + 1), c11 = lattice_at(i + 1, j + 1);
  const double w00 = (1 - u) * (1 - v), w10 = u * (1 - v), w01 = (1 - u) * v, w11 = u * v;
  double acc = 0, wacc = 0;
  if (c00 >= 0) acc += w00 * nodal_values[c00], wacc += w00;
  if (c10 >= 0) acc += w10 * nodal_values[c10], wacc += w10;
  if (c01 >= 0) acc += w01 * nodal_values[c01], wacc += w01;
  if (c11 >= 0) acc += w11 * nodal_values[c11], wacc += w11;
  return wacc > 0 ? acc / wacc : 0.0;
}

// --- operator assembly -----------------------------------------------------------

DiscreteOperator assemble_pullback_operator(const MovingDomain& domain, double t,
                                            const SpatialGrid& grid,
                                            const SPDECoefficients& coeffs) {
  const int n_unknowns = grid.unknown_count();
  const int n_boundary = static_cast<int>(grid.boundary_records().size());
  const double h = grid.spacing();
  std::vector<Eigen::Triplet<double>> in_trip, b_trip;
  in_trip.reserve(static_cast<std::size_t>(n_unknowns) * (grid.dim() == 1 ? 3 : 9));

  auto add = [&](int row, int code, double value) {
    if (code >= 0)
      in_trip.emplace_back(row, code, value);
    else
      b_trip.emplace_back(row, -1 - code, value);
  };

  for (int u = 0; u < n_unknowns; ++u) {
    const int node = grid.node_of_unknown(u);
    const Vec y = grid.node(node);
    const PullbackDerivatives pd = domain.pullback_jacobians(t, y);
    const double det = pd.grad.determinant();
    if (!(std::abs(det) > 1e-10))
      throw numerical_error("assemble_pullback_operator: singular pullback jacobian");
    const Vec x_phys = domain.forward(t, y);
    const Mat principal = pd.grad * pd.grad.transpose();
    Vec beta = pd.second.rowwise().sum() - pd.time_deriv;
    beta += pd.grad * coeffs.gradient_drift(t, x_phys);
    const double zeroth = coeffs.zeroth_order(t, x_phys);
    const auto& st = grid.stencil()[u];

    if (grid.dim() == 1) {
      const double a = principal(0, 0);
      add(u, st[0], a / (h * h) - beta[0] / (2 * h));
      add(u, st[1], a / (h * h) + beta[0] / (2 * h));
      in_trip.emplace_back(u, u, -2 * a / (h * h) + zeroth);
      continue;
    }

    const double axx = principal(0, 0), ayy = principal(1, 1), axy = principal(0, 1);
    add(u, st[0], axx / (h * h) - beta[0] / (2 * h));  // -x
    add(u, st[1], axx / (h * h) + beta[0] / (2 * h));  // +x
    add(u, st[2], ayy / (h * h) - beta[1] / (2 * h));  // -y
    add(u, st[3], ayy / (h * h) + beta[1] / (2 * h));  // +y
    in_trip.emplace_back(u, u, -2 * (axx + ayy) / (h * h) + zeroth);
    const auto& dg = grid.diagonal_stencil()[u];
    // Mixed term on the 4-corner stencil; dropped at boundary-adjacent nodes
    // where a corner is missing (local first-order closure).
    if (dg[0] >= 0 && dg[1] >= 0 && dg[2] >= 0 && dg[3] >= 0 && axy != 0.0) {
      const double c = axy / (2 * h * h);
      in_trip.emplace_back(u, dg[0], c);
      in_trip.emplace_back(u, dg[3], c);
      in_trip.emplace_back(u, dg[1], -c);
      in_trip.emplace_back(u, dg[2], -c);
    }
  }

  DiscreteOperator op;
  op.time = t;
  op.interior.resize(n_unknowns, n_unknowns);
  op.interior.setFromTriplets(in_trip.begin(), in_trip.end());
  op.boundary.resize(n_unknowns, n_boundary);
  op.boundary.setFromTriplets(b_trip.begin(), b_trip.end());
  return op;
}

double principal_symbol_min_eigenvalue(const MovingDomain& domain, double t,
                                       const SpatialGrid& grid) {
  double lo = INFINITY;
  for (int u = 0; u < grid.unknown_count(); ++u) {
    const Vec y = grid.node(grid.node_of_unknown(u));
    const PullbackDerivatives pd = domain.pullback_jacobians(t, y);
    const Mat a = pd.grad * pd.grad.transpose();
    if (grid.dim() == 1) {
      lo = std::min(lo, a(0, 0));
    } else {
      Eigen::SelfAdjointEigenSolver<Mat> es(a);
      lo = std::min(lo, es.eigenvalues().minCoeff());
    }
  }
  return lo;
}

Vec boundary_values(const MovingDomain& domain, const SpatialGrid& grid,
                    const SPDECoefficients& coeffs, double t) {
  const auto& recs = grid.boundary_records();
  Vec bv(recs.size());
  for (std::size_t k = 0; k < recs.size(); ++k)
    bv[k] = recs[k].moving ? 0.0 : coeffs.boundary_data(t, domain.forward(t, recs[k].point));
  return bv;
}

namespace {

bool operator_is_time_invariant(const MovingDomain& domain, const SPDECoefficients& coeffs) {
  auto static_motion = [](const geometry::MotionLaw& m) {
    return m.kind == geometry::MotionLaw::Kind::Static;
  };
  bool static_domain = false;
  if (const auto* iv = domain.as_interval()) static_domain = static_motion(iv->motion);
  if (const auto* st = domain.as_star()) static_domain = static_motion(st->motion);
  return static_domain && coeffs.gradient_drift.time_invariant &&
         coeffs.zeroth_order.time_invariant;
}

using SliceCallback = std::function<void(int step, double t, const Mat& nodal)>;

// Factored tridiagonal system (I - dt L) for the 1-D fast path: forward
// elimination stored once, vectorized sweeps over the path-major RHS.
struct TridiagonalFactor {
  Vec pivot;    // eliminated diagonal
  Vec lower_w;  // elimination multipliers
  Vec upper;    // untouched superdiagonal
  bool valid = false;

  static TridiagonalFactor build(const Eigen::SparseMatrix<double>& interior, double dt) {
    const int n = static_cast<int>(interior.rows());
    Vec sub = Vec::Zero(n), diag = Vec::Zero(n), super = Vec::Zero(n);
    for (int col = 0; col < interior.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(interior, col); it; ++it) {
        const int row = static_cast<int>(it.row());
        if (row == col)
          diag[row] = 1.0 - dt * it.value();
        else if (row == col + 1)
          sub[row] = -dt * it.value();
        else if (row == col - 1)
          super[row] = -dt * it.value();
        else
          return {};  // not tridiagonal: caller falls back to the sparse solver
      }
    TridiagonalFactor f;
    f.pivot = diag;
    f.lower_w = Vec::Zero(n);
    f.upper = super;
    for (int i = 1; i < n; ++i) {
      if (std::abs(f.pivot[i - 1]) < 1e-300) return {};
      f.lower_w[i] = sub[i] / f.pivot[i - 1];
      f.pivot[i] -= f.lower_w[i] * super[i - 1];
    }
    if (std::abs(f.pivot[n - 1]) < 1e-300) return {};
    f.valid = true;
    return f;
  }

  void solve_in_place(Mat& rhs) const {
    const int n = static_cast<int>(pivot.size());
    for (int i = 1; i < n; ++i) rhs.row(i) -= lower_w[i] * rhs.row(i - 1);
    rhs.row(n - 1) /= pivot[n - 1];
    for (int i = n - 2; i >= 0; --i)
      rhs.row(i) = (rhs.row(i) - upper[i] * rhs.row(i + 1)) / pivot[i];
  }
};

// Time-major semi-implicit Euler-Maruyama sweep shared by solve() and
// solve_moments(); `on_slice` receives the full nodal state (nodes x paths)
// at every retained step.
void run_sweep(const MovingDomain& domain, const SPDECoefficients& coeffs,
               const stochastic::Ensemble& ensemble, const SpatialGrid& grid,
               const std::vector<int>& keep_steps, const SliceCallback& on_slice) {
  const int n_paths = ensemble.size();
  const int n_nodes = grid.node_count();
  const int n_unknowns = grid.unknown_count();
  const Vec& times = ensemble.times();
  const int steps = ensemble.steps();

  Mat state(n_unknowns, n_paths);  // unknown rows only
  for (int u = 0; u < n_unknowns; ++u) {
    const double u0 = coeffs.initial_data ? coeffs.initial_data(grid.node(grid.node_of_unknown(u)))
                                          : 0.0;
    state.row(u).setConstant(u0);
  }

  auto emit = [&](int step, double t) {
    Mat nodal = Mat::Zero(n_nodes, n_paths);
    for (int u = 0; u < n_unknowns; ++u) nodal.row(grid.node_of_unknown(u)) = state.row(u);
    const Vec bv = boundary_values(domain, grid, coeffs, t);
    const auto& recs = grid.boundary_records();
    for (std::size_t k = 0; k < recs.size(); ++k)
      if (recs[k].node >= 0) nodal.row(recs[k].node).setConstant(bv[k]);
    on_slice(step, t, nodal);
  };

  std::size_t keep_pos = 0;
  if (keep_pos < keep_steps.size() && keep_steps[keep_pos] == 0) {
    emit(0, times[0]);
    ++keep_pos;
  }

  const bool invariant = operator_is_time_invariant(domain, coeffs);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  TridiagonalFactor tri;
  Eigen::SparseMatrix<double> boundary_matrix;
  bool factored = false;
  Eigen::SparseMatrix<double> identity(n_unknowns, n_unknowns);
  identity.setIdentity();

  // Physical positions of unknown nodes, refreshed per step for the noise
  // coefficient (noise is explicit at the old time).
  Vec noise_coeff(n_unknowns);

  for (int k = 0; k < steps; ++k) {
    const double t_old = times[k];
    const double t_new = times[k + 1];
    const double dt = t_new - t_old;

    if (!factored || !invariant) {
      const DiscreteOperator op = assemble_pullback_operator(domain, t_new, grid, coeffs);
      // 1-D systems are tridiagonal and diagonally dominant: a direct
      // elimination beats the general sparse path by an order of magnitude
      // on wide path-major right-hand sides.
      tri = grid.dim() == 1 ? TridiagonalFactor::build(op.interior, dt) : TridiagonalFactor{};
      if (!tri.valid) {
        Eigen::SparseMatrix<double> system = identity - dt * op.interior;
        system.makeCompressed();
        lu.compute(system);
        if (lu.info() != Eigen::Success)
          throw numerical_error("solve: sparse factorization failed at t = " +
                                std::to_string(t_new));
      }
      boundary_matrix = op.boundary;
      factored = true;
    }

    for (int u = 0; u < n_unknowns; ++u) {
      const Vec x_phys = domain.forward(t_old, grid.node(grid.node_of_unknown(u)));
      noise_coeff[u] = coeffs.noise_intensity(t_old, x_phys);
    }
    const Vec dw = ensemble.increments_at_step(k);

    Mat rhs = state.array() * ((noise_coeff * dw.transpose()).array() + 1.0);
    const Vec bv = boundary_values(domain, grid, coeffs, t_new);
    if (boundary_matrix.cols() > 0) {
      const Vec bload = dt * (boundary_matrix * bv);
      rhs.colwise() += bload;
    }
    if (tri.valid) {
      tri.solve_in_place(rhs);
      state.swap(rhs);
    } else {
      state = lu.solve(rhs);
      if (lu.info() != Eigen::Success)
        throw numerical_error("solve: linear solve failed at t = " + std::to_string(t_new));
    }

    if (keep_pos < keep_steps.size() && keep_steps[keep_pos] == k + 1) {
      emit(k + 1, t_new);
      ++keep_pos;
    }
  }
}

std::vector<int> retained_steps(const Vec& times, int stride,
                                const std::vector<double>& extra) {
  const int steps = static_cast<int>(times.size()) - 1;
  std::vector<int> keep;
  for (int k = 0; k <= steps; ++k)
    if (k % std::max(1, stride) == 0 || k == steps) keep.push_back(k);
  for (double t : extra) {
    int best = 0;
    for (int k = 0; k <= steps; ++k)
      if (std::abs(times[k] - t) < std::abs(times[best] - t)) best = k;
    keep.push_back(best);
  }
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  return keep;
}

}  // namespace

FieldSample step(const MovingDomain& domain, const SpatialGrid& grid,
                 const SPDECoefficients& coeffs, const FieldSample& state, double dt,
                 double brownian_increment) {
  if (state.values.size() != grid.node_count())
    throw invalid_input("step: state size does not match the grid");
  const double t_new = state.time + dt;
  const int n_unknowns = grid.unknown_count();
  const DiscreteOperator op = assemble_pullback_operator(domain, t_new, grid, coeffs);
  Eigen::SparseMatrix<double> identity(n_unknowns, n_unknowns);
  identity.setIdentity();
  Eigen::SparseMatrix<double> system = identity - dt * op.interior;
  system.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(system);
  if (lu.info() != Eigen::Success) throw numerical_error("step: factorization failed");

  Vec rhs(n_unknowns);
  for (int u = 0; u < n_unknowns; ++u) {
    const int node = grid.node_of_unknown(u);
    const Vec x_phys = domain.forward(state.time, grid.node(node));
    rhs[u] = state.values[node] *
             (1.0 + coeffs.noise_intensity(state.time, x_phys) * brownian_increment);
  }
  const Vec bv = boundary_values(domain, grid, coeffs, t_new);
  if (op.boundary.cols() > 0) rhs += dt * (op.boundary * bv);
  const Vec sol = lu.solve(rhs);
  if (lu.info() != Eigen::Success) throw numerical_error("step: linear solve failed");

  FieldSample out;
  out.time = t_new;
  out.path_index = state.path_index;
  out.values = Vec::Zero(grid.node_count());
  for (int u = 0; u < n_unknowns; ++u) out.values[grid.node_of_unknown(u)] = sol[u];
  const auto& recs = grid.boundary_records();
  for (std::size_t k = 0; k < recs.size(); ++k)
    if (recs[k].node >= 0) out.values[recs[k].node] = bv[k];
  return out;
}

int EnsembleField::slice_near(double t, double tol) const {
  if (slice_times.empty()) throw domain_error("EnsembleField: no stored slices");
  int best = 0;
  for (std::size_t i = 1; i < slice_times.size(); ++i)
    if (std::abs(slice_times[i] - t) < std::abs(slice_times[best] - t))
      best = static_cast<int>(i);
  if (tol < 0) {
    double gap = time_grid[time_grid.size() - 1] - time_grid[0];
    for (std::size_t i = 1; i < slice_times.size(); ++i)
      gap = std::min(gap, slice_times[i] - slice_times[i - 1]);
    tol = 0.51 * gap + 1e-12;
  }
  if (std::abs(slice_times[best] - t) > tol)
    throw domain_error("EnsembleField: no stored slice near requested time");
  return best;
}

double EnsembleField::eval_physical(int slice_index, int path, const Vec& x) const {
  const Vec y = domain.backward(slice_times[slice_index], x);
  return grid.interpolate(slices[slice_index].col(path), y);
}

EnsembleField solve(const MovingDomain& domain, const SPDECoefficients& coeffs,
                    const stochastic::Ensemble& ensemble, const SpatialGrid& grid,
                    const SolveOptions& options) {
  coeffs.validate(domain);
  const auto keep = retained_steps(ensemble.times(), options.slice_stride,
                                   options.extra_slice_times);
  const std::size_t bytes = keep.size() * static_cast<std::size_t>(grid.node_count()) *
                            ensemble.size() * sizeof(double);
  if (bytes > options.memory_limit_bytes)
    throw numerical_error("solve: slice storage would exceed the memory limit; raise "
                          "slice_stride or lower the path count");

  EnsembleField field;
  field.domain = domain;
  field.grid = grid;
  field.coeffs = coeffs;
  field.base_seed = ensemble.base_seed();
  field.paths = ensemble.size();
  field.time_grid = ensemble.times();
  field.slices.reserve(keep.size());

  run_sweep(domain, coeffs, ensemble, grid, keep, [&](int step, double t, const Mat& nodal) {
    field.slice_steps.push_back(step);
    field.slice_times.push_back(t);
    field.slices.push_back(nodal);
  });
  return field;
}

MomentField solve_moments(const MovingDomain& domain, const SPDECoefficients& coeffs,
                          const stochastic::Ensemble& ensemble, const SpatialGrid& grid,
                          int slice_stride) {
  coeffs.validate(domain);
  const auto keep = retained_steps(ensemble.times(), slice_stride, {});
  MomentField mf;
  mf.mean.resize(grid.node_count(), static_cast<int>(keep.size()));
  mf.second.resize(grid.node_count(), static_cast<int>(keep.size()));
  int col = 0;
  run_sweep(domain, coeffs, ensemble, grid, keep, [&](int, double t, const Mat& nodal) {
    mf.slice_times.push_back(t);
    mf.mean.col(col) = nodal.rowwise().mean();
    mf.second.col(col) = nodal.array().square().rowwise().mean();
    ++col;
  });
  return mf;
}

// --- heat-kernel utilities -------------------------------------------------------

double heat_kernel(double t, const Vec& x, double t0, const Vec& y) {
  if (!(t < t0)) throw domain_error("heat_kernel: requires t < t0");
  const double gap = t0 - t;
  const double n = static_cast<double>(x.size());
  return std::pow(gap, -n / 2) * std::exp(-(x - y).squaredNorm() / (4 * gap));
}

Vec physical_weights(const MovingDomain& domain, const SpatialGrid& grid, double t) {
  Vec w(grid.node_count());
  for (int i = 0; i < grid.node_count(); ++i) {
    const PullbackDerivatives pd = domain.pullback_jacobians(t, grid.node(i));
    w[i] = grid.reference_weights()[i] / std::abs(pd.grad.determinant());
  }
  return w;
}

Mat physical_points(const MovingDomain& domain, const SpatialGrid& grid, double t) {
  Mat pts(grid.dim(), grid.node_count());
  for (int i = 0; i < grid.node_count(); ++i) pts.col(i) = domain.forward(t, grid.node(i));
  return pts;
}

MassEstimate weighted_mass_H(const EnsembleField& field, double t, double t0,
                             const Vec& y, const CutoffBall& region) {
  if (!(t < t0)) throw domain_error("weighted_mass_H: requires t < t0");
  if (!(region.outer_radius > region.inner_radius && region.inner_radius > 0))
    throw invalid_input("weighted_mass_H: need 0 < rho1 < rho2");
  const int si = field.slice_near(t);
  const Mat& slice = field.slice(si);
  const double ts = field.slice_times[si];
  const double lo = (2 * region.inner_radius + region.outer_radius) / 3;
  const double hi = (region.inner_radius + 2 * region.outer_radius) / 3;
  const auto cutoff = weights::Mollifier::between(lo, hi);  // 1 below lo, 0 above hi
  const Mat pts = physical_points(field.domain, field.grid, ts);
  const Vec w = physical_weights(field.domain, field.grid, ts);

  Vec kernel_weight(field.grid.node_count());
  for (int i = 0; i < field.grid.node_count(); ++i) {
    const double r = (pts.col(i) - region.center).norm();
    if (r >= hi) {
      kernel_weight[i] = 0;
      continue;
    }
    const double chi = cutoff.value(r);
    kernel_weight[i] = chi * chi * heat_kernel(ts, pts.col(i), t0, y) * w[i];
  }

  const int n = field.paths;
  double sum = 0, sum2 = 0;
  for (int p = 0; p < n; ++p) {
    const double hp = (slice.col(p).array().square() * kernel_weight.array()).sum();
    sum += hp;
    sum2 += hp * hp;
  }
  MassEstimate est;
  est.value = sum / n;
  est.stderr_mc = std::sqrt(std::max(0.0, sum2 / n - sq(est.value)) / n);
  return est;
}

double weighted_mass_limit_ratio(const EnsembleField& field, double t, double t0,
                                 const CutoffBall& region, int y_samples) {
  const int dim = field.grid.dim();
  const double rho1 = region.inner_radius;
  // Numerator: int over B_rho1 of H(t; t0, y) dy by the midpoint rule.
  double numerator = 0;
  if (dim == 1) {
    const double h = 2 * rho1 / y_samples;
    for (int j = 0; j < y_samples; ++j) {
      Vec y(1);
      y[0] = region.center[0] - rho1 + (j + 0.5) * h;
      numerator += weighted_mass_H(field, t, t0, y, region).value * h;
    }
  } else {
    const double h = 2 * rho1 / y_samples;
    for (int i = 0; i < y_samples; ++i)
      for (int j = 0; j < y_samples; ++j) {
        Vec y(2);
        y[0] = region.center[0] - rho1 + (i + 0.5) * h;
        y[1] = region.center[1] - rho1 + (j + 0.5) * h;
        if ((y - region.center).norm() < rho1)
          numerator += weighted_mass_H(field, t, t0, y, region).value * h * h;
      }
  }
  // Denominator: 2^n pi^{n/2} E int_{B_rho1 cap G(t0)} (cutoff u)(t0)^2.
  const int si = field.slice_near(t0);
  const Mat& slice = field.slice(si);
  const double ts = field.slice_times[si];
  const double lo = (2 * region.inner_radius + region.outer_radius) / 3;
  const double hi = (region.inner_radius + 2 * region.outer_radius) / 3;
  const auto cutoff = weights::Mollifier::between(lo, hi);
  const Mat pts = physical_points(field.domain, field.grid, ts);
  const Vec w = physical_weights(field.domain, field.grid, ts);
  Vec mask = Vec::Zero(field.grid.node_count());
  for (int i = 0; i < field.grid.node_count(); ++i) {
    const double r = (pts.col(i) - region.center).norm();
    if (r < rho1) mask[i] = sq(cutoff.value(r)) * w[i];
  }
  double den = 0;
  for (int p = 0; p < field.paths; ++p)
    den += (slice.col(p).array().square() * mask.array()).sum();
  den = den / field.paths * std::pow(2.0, dim) * std::pow(kPi, dim / 2.0);
  if (den == 0) throw numerical_error("weighted_mass_limit_ratio: zero denominator");
  return numerator / den;
}

namespace {

// grad_x u = J^T grad_y v with J = d rho/dx; reference gradient by centered
// differences (one-sided against missing 2-D neighbors).
Vec reference_gradient(const SpatialGrid& grid, const Vec& nodal, int node) {
  const double h = grid.spacing();
  Vec g = Vec::Zero(grid.dim());
  if (grid.dim() == 1) {
    const int n = grid.node_count();
    if (node == 0)
      g[0] = (nodal[1] - nodal[0]) / h;
    else if (node == n - 1)
      g[0] = (nodal[n - 1] - nodal[n - 2]) / h;
    else
      g[0] = (nodal[node + 1] - nodal[node - 1]) / (2 * h);
    return g;
  }
  const int u = grid.unknown_of_node(node);
  const auto& st = grid.stencil()[u];
  for (int axis = 0; axis < 2; ++axis) {
    const int lo = st[2 * axis], hi = st[2 * axis + 1];
    const double center = nodal[node];
    const double vlo = lo >= 0 ? nodal[grid.node_of_unknown(lo)] : center;
    const double vhi = hi >= 0 ? nodal[grid.node_of_unknown(hi)] : center;
    const double span = (lo >= 0 && hi >= 0) ? 2 * h : h;
    g[axis] = (vhi - vlo) / span;
  }
  return g;
}

}  // namespace

CaccioppoliReport caccioppoli_check(const EnsembleField& field, const Cylinder& inner,
                                    const Cylinder& outer) {
  const bool nested = inner.t_begin >= outer.t_begin - 1e-12 &&
                      inner.t_end <= outer.t_end + 1e-12 &&
                      (inner.center - outer.center).norm() + inner.radius <=
                          outer.radius + 1e-12;
  if (!nested) throw invalid_input("caccioppoli_check: cylinders are not nested");

  double grad_energy = 0, mass = 0;
  double prev_t = 0;
  bool have_prev = false;
  for (std::size_t si = 0; si < field.slice_times.size(); ++si) {
    const double t = field.slice_times[si];
    if (t < outer.t_begin - 1e-12 || t > outer.t_end + 1e-12) continue;
    const double dt_w = have_prev ? (t - prev_t) : 0.0;
    prev_t = t;
    if (!have_prev) {
      have_prev = true;
      continue;
    }
    const Mat& slice = field.slice(static_cast<int>(si));
    const Mat pts = physical_points(field.domain, field.grid, t);
    const Vec w = physical_weights(field.domain, field.grid, t);

    double slice_mass = 0, slice_grad = 0;
    const bool in_inner_t = t >= inner.t_begin - 1e-12 && t <= inner.t_end + 1e-12;
    for (int p = 0; p < field.paths; ++p) {
      const Vec nodal = slice.col(p);
      for (int i = 0; i < field.grid.node_count(); ++i) {
        const double r_out = (pts.col(i) - outer.center).norm();
        if (r_out < outer.radius) slice_mass += sq(nodal[i]) * w[i];
        if (in_inner_t && (pts.col(i) - inner.center).norm() < inner.radius) {
          const PullbackDerivatives pd = field.domain.pullback_jacobians(t, field.grid.node(i));
          const Vec gref = reference_gradient(field.grid, nodal, i);
          slice_grad += (pd.grad.transpose() * gref).squaredNorm() * w[i];
        }
      }
    }
    mass += dt_w * slice_mass / field.paths;
    grad_energy += dt_w * slice_grad / field.paths;
  }

  CaccioppoliReport rep;
  rep.gradient_energy = grad_energy;
  rep.mass = mass;
  const double width = outer.radius - inner.radius;
  rep.scale = 1.0 / sq(outer.radius) + 1.0 / sq(width);
  rep.fitted_constant = mass > 0 ? grad_energy / (rep.scale * mass) : 0.0;
  return rep;
}

// --- manufactured solutions -------------------------------------------------------

namespace {

struct IntervalFrame {
  double x_left, s0;
  geometry::MotionLaw motion;
  double length(double t) const { return s0 + motion.offset(t) - x_left; }
  double rate(double t) const { return motion.offset_rate(t); }
  double xi(double t, double x) const { return (x - x_left) / length(t); }
};

IntervalFrame frame_of(const MovingDomain& domain) {
  const auto* iv = domain.as_interval();
  if (!iv) throw invalid_input("manufactured solutions require an interval family");
  return IntervalFrame{iv->x_left, iv->s0, iv->motion};
}

}  // namespace

ManufacturedSolution eigenmode_solution(const MovingDomain& domain, int mode,
                                        double damping) {
  const IntervalFrame f = frame_of(domain);
  const double kpi = mode * kPi;
  ManufacturedSolution m;
  m.name = "eigenmode_k" + std::to_string(mode);
  m.stochastic = false;
  m.value = [f, kpi, damping](double t, const Vec& x, double) {
    return std::exp(-damping * t) * std::sin(kpi * f.xi(t, x[0]));
  };
  m.gradient = [f, kpi, damping](double t, const Vec& x, double) {
    Vec g(1);
    g[0] = std::exp(-damping * t) * kpi * std::cos(kpi * f.xi(t, x[0])) / f.length(t);
    return g;
  };
  m.drift_source = [f, kpi, damping](double t, const Vec& x, double) {
    const double len = f.length(t);
    const double xi = f.xi(t, x[0]);
    const double amp = std::exp(-damping * t);
    const double u_t = amp * (-damping * std::sin(kpi * xi) +
                              kpi * std::cos(kpi * xi) * (-xi * f.rate(t) / len));
    const double u_xx = -amp * kpi * kpi * std::sin(kpi * xi) / (len * len);
    return u_t - u_xx;
  };
  m.noise_source = [](double, const Vec&, double) { return 0.0; };
  m.noise_source_gradient = [](double, const Vec&, double) { return Vec::Zero(1); };
  return m;
}

ManufacturedSolution advected_bump_solution(const MovingDomain& domain, double center,
                                            double width) {
  const IntervalFrame f = frame_of(domain);
  ManufacturedSolution m;
  m.name = "advected_bump";
  m.stochastic = false;
  auto profile = [center, width](double xi) {
    const double g = std::exp(-sq(xi - center) / (2 * sq(width)));
    return g * std::sin(kPi * xi);
  };
  auto profile_d = [center, width](double xi) {
    const double g = std::exp(-sq(xi - center) / (2 * sq(width)));
    const double q = (xi - center) / sq(width);
    return g * (kPi * std::cos(kPi * xi) - q * std::sin(kPi * xi));
  };
  auto profile_dd = [center, width](double xi) {
    const double g = std::exp(-sq(xi - center) / (2 * sq(width)));
    const double q = (xi - center) / sq(width);
    return g * (-2 * kPi * q * std::cos(kPi * xi) +
                (q * q - kPi * kPi - 1.0 / sq(width)) * std::sin(kPi * xi));
  };
  m.value = [f, profile](double t, const Vec& x, double) { return profile(f.xi(t, x[0])); };
  m.gradient = [f, profile_d](double t, const Vec& x, double) {
    Vec g(1);
    g[0] = profile_d(f.xi(t, x[0])) / f.length(t);
    return g;
  };
  m.drift_source = [f, profile_d, profile_dd](double t, const Vec& x, double) {
    const double len = f.length(t);
    const double xi = f.xi(t, x[0]);
    const double u_t = profile_d(xi) * (-xi * f.rate(t) / len);
    const double u_xx = profile_dd(xi) / (len * len);
    return u_t - u_xx;
  };
  m.noise_source = [](double, const Vec&, double) { return 0.0; };
  m.noise_source_gradient = [](double, const Vec&, double) { return Vec::Zero(1); };
  return m;
}

ManufacturedSolution geometric_brownian_solution(const MovingDomain& domain, double beta) {
  const IntervalFrame f = frame_of(domain);
  if (f.motion.kind != geometry::MotionLaw::Kind::Static)
    throw invalid_input("geometric_brownian_solution: static interval required");
  const double len = f.s0 - f.x_left;
  const double kpi = kPi / len;
  ManufacturedSolution m;
  m.name = "geometric_brownian";
  m.stochastic = true;
  auto amp = [beta](double t, double w) { return std::exp(beta * w - 0.5 * beta * beta * t); };
  m.value = [f, kpi, amp](double t, const Vec& x, double w) {
    return amp(t, w) * std::sin(kpi * (x[0] - f.x_left));
  };
  m.gradient = [f, kpi, amp](double t, const Vec& x, double w) {
    Vec g(1);
    g[0] = amp(t, w) * kpi * std::cos(kpi * (x[0] - f.x_left));
    return g;
  };
  m.drift_source = [m_value = m.value, kpi](double t, const Vec& x, double w) {
    return kpi * kpi * m_value(t, x, w);
  };
  m.noise_source = [m_value = m.value, beta](double t, const Vec& x, double w) {
    return beta * m_value(t, x, w);
  };
  m.noise_source_gradient = [m_grad = m.gradient, beta](double t, const Vec& x, double w) {
    return Vec(beta * m_grad(t, x, w));
  };
  return m;
}

}  // namespace spdelab::solver
