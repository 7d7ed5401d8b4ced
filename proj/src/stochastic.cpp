#include "spdelab/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace spdelab::stochastic {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                      std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline double to_unit_interval(std::uint32_t hi, std::uint32_t lo) {
  // 53 significant bits, mapped to (0,1): never returns 0 or 1.
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c,
                                        std::array<std::uint32_t, 2> k) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mul_hi_lo(kPhiloxM0, c[0], hi0, lo0);
    mul_hi_lo(kPhiloxM1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kPhiloxW0;
    k[1] += kPhiloxW1;
  }
  return c;
}

double normal_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                            static_cast<std::uint32_t>(seed >> 32)};
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  const auto r = philox4x32(ctr, key);
  const double u1 = to_unit_interval(r[0], r[1]);
  const double u2 = to_unit_interval(r[2], r[3]);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

double uniform_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                            static_cast<std::uint32_t>(seed >> 32)};
  // Distinct counter tag so uniform and normal streams never collide.
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(stream),
      static_cast<std::uint32_t>(stream >> 32) ^ 0x5DEECE66u,
      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  const auto r = philox4x32(ctr, key);
  return to_unit_interval(r[0], r[1]);
}

Vec BrownianPath::values() const {
  Vec w(times.size());
  w[0] = 0.0;
  for (int k = 0; k < increments.size(); ++k) w[k + 1] = w[k] + increments[k];
  return w;
}

Ensemble::Ensemble(std::uint64_t base_seed, int paths, Vec times)
    : base_seed_(base_seed), n_paths_(paths), times_(std::move(times)) {}

double Ensemble::increment(int path, int step) const {
  return std::sqrt(dt(step)) *
         normal_draw(base_seed_, static_cast<std::uint64_t>(path),
                     static_cast<std::uint64_t>(step));
}

Vec Ensemble::increments_at_step(int step) const {
  Vec dw(n_paths_);
  const double root_dt = std::sqrt(dt(step));
  for (int p = 0; p < n_paths_; ++p)
    dw[p] = root_dt * normal_draw(base_seed_, static_cast<std::uint64_t>(p),
                                  static_cast<std::uint64_t>(step));
  return dw;
}

BrownianPath Ensemble::path(int index) const {
  BrownianPath bp;
  bp.times = times_;
  bp.seed = base_seed_;
  bp.index = static_cast<std::uint64_t>(index);
  bp.increments.resize(steps());
  for (int k = 0; k < steps(); ++k) bp.increments[k] = increment(index, k);
  return bp;
}

Ensemble generate_paths(std::uint64_t base_seed, int paths, const Vec& times) {
  if (paths < 1) throw invalid_input("generate_paths: need at least one path");
  if (times.size() < 2) throw invalid_input("generate_paths: need at least two grid times");
  for (int k = 0; k + 1 < times.size(); ++k)
    if (!(times[k + 1] > times[k]))
      throw invalid_input("generate_paths: time grid must be strictly increasing");
  return Ensemble(base_seed, paths, times);
}

Vec uniform_time_grid(double horizon, int steps) {
  if (!(horizon > 0) || steps < 1) throw invalid_input("uniform_time_grid: bad arguments");
  Vec t(steps + 1);
  for (int k = 0; k <= steps; ++k) t[k] = horizon * k / steps;
  return t;
}

ItoIsometryReport ito_isometry_check(const Ensemble& ensemble, const Vec& integrand) {
  if (integrand.size() != ensemble.steps())
    throw invalid_input("ito_isometry_check: integrand must have one value per step");

  const int n = ensemble.size();
  double sum = 0, sum2 = 0;
  for (int p = 0; p < n; ++p) {
    double x = 0;
    for (int k = 0; k < ensemble.steps(); ++k)
      x += integrand[k] * ensemble.increment(p, k);
    sum += x * x;
    sum2 += x * x * x * x;
  }
  ItoIsometryReport rep;
  rep.mc_second_moment = sum / n;
  double exact = 0;
  for (int k = 0; k < ensemble.steps(); ++k) exact += sq(integrand[k]) * ensemble.dt(k);
  rep.exact = exact;
  const double var = std::max(0.0, sum2 / n - sq(rep.mc_second_moment));
  rep.stderr_mc = std::sqrt(var / n);
  rep.rel_error = std::abs(rep.mc_second_moment - exact) / std::max(exact, 1e-300);
  rep.z_score = rep.stderr_mc > 0
                    ? std::abs(rep.mc_second_moment - exact) / rep.stderr_mc
                    : (rep.mc_second_moment == exact ? 0.0 : INFINITY);
  rep.within_3sigma = rep.z_score <= 3.0 || rep.mc_second_moment == exact;
  return rep;
}

void write_paths_binary(const Ensemble& ensemble, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw invalid_input("write_paths_binary: cannot open " + path);
  auto put_u64 = [&](std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
  };
  put_u64(kPathDumpMagic);
  put_u64(static_cast<std::uint64_t>(ensemble.steps()));
  put_u64(static_cast<std::uint64_t>(ensemble.size()));
  for (int p = 0; p < ensemble.size(); ++p)
    for (int k = 0; k < ensemble.steps(); ++k) {
      const double x = ensemble.increment(p, k);
      std::uint64_t bits;
      std::memcpy(&bits, &x, 8);
      put_u64(bits);
    }
}

PathDump read_paths_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw invalid_input("read_paths_binary: cannot open " + path);
  auto get_u64 = [&]() {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  };
  if (get_u64() != kPathDumpMagic) throw invalid_input("read_paths_binary: bad magic");
  PathDump dump;
  dump.steps = get_u64();
  dump.paths = get_u64();
  dump.increments.resize(static_cast<int>(dump.steps), static_cast<int>(dump.paths));
  for (std::uint64_t p = 0; p < dump.paths; ++p)
    for (std::uint64_t k = 0; k < dump.steps; ++k) {
      const std::uint64_t bits = get_u64();
      double x;
      std::memcpy(&x, &bits, 8);
      dump.increments(static_cast<int>(k), static_cast<int>(p)) = x;
    }
  if (!in) throw invalid_input("read_paths_binary: truncated file");
  return dump;
}

double ks_normal_scaled_statistic(Vec samples) {
  const int m = static_cast<int>(samples.size());
  if (m == 0) throw invalid_input("ks_normal_scaled_statistic: empty sample");
  std::sort(samples.data(), samples.data() + m);
  double d = 0;
  for (int i = 0; i < m; ++i) {
    const double cdf = 0.5 * std::erfc(-samples[i] / std::sqrt(2.0));
    d = std::max(d, std::abs(cdf - (i + 1.0) / m));
    d = std::max(d, std::abs(cdf - static_cast<double>(i) / m));
  }
  return d * std::sqrt(static_cast<double>(m));
}

}  // namespace spdelab::stochastic
