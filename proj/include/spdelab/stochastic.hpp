#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "spdelab/common.hpp"

namespace spdelab::stochastic {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// A block is a pure function of (key, counter); there is no sequential
/// state, so any (path, step) increment can be generated independently on
/// any worker in any order.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Standard normal draw keyed by (seed, stream, index). Bit-reproducible.
double normal_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Uniform draw in (0,1), same keying scheme.
double uniform_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// One sampled Brownian path on a fixed time grid.
/// increments[k] ~ N(0, dt_k) between times[k] and times[k+1]; W(0) = 0.
struct BrownianPath {
  Vec times;       // M+1 strictly increasing values, times[0] = 0
  Vec increments;  // M values
  std::uint64_t seed = 0;
  std::uint64_t index = 0;  // path index within its ensemble

  /// W at every grid time (cumulative sum of increments, W(0)=0).
  Vec values() const;
};

/// A seeded family of Brownian paths sharing one time grid. Paths are
/// materialized on demand; the (seed, path, step) keying makes regeneration
/// bit-identical regardless of access order or worker count.
class Ensemble {
 public:
  Ensemble() = default;
  Ensemble(std::uint64_t base_seed, int paths, Vec times);

  std::uint64_t base_seed() const { return base_seed_; }
  int size() const { return n_paths_; }
  const Vec& times() const { return times_; }
  int steps() const { return static_cast<int>(times_.size()) - 1; }
  double dt(int k) const { return times_[k + 1] - times_[k]; }

  /// Increment dW_k of one path.
  double increment(int path, int step) const;

  /// All paths' increments at one step, as a length-N vector.
  Vec increments_at_step(int step) const;

  /// Materialize a full path.
  BrownianPath path(int index) const;

 private:
  std::uint64_t base_seed_ = 0;
  int n_paths_ = 0;
  Vec times_;
};

/// Build an ensemble after validating the grid (strictly increasing, t0=0).
Ensemble generate_paths(std::uint64_t base_seed, int paths, const Vec& times);

/// Uniform time grid helper: M steps on [0, horizon].
Vec uniform_time_grid(double horizon, int steps);

/// Monte Carlo check of E[(sum c_k dW_k)^2] = sum c_k^2 dt_k for an adapted
/// step-function integrand c (one value per step).
struct ItoIsometryReport {
  double mc_second_moment = 0;
  double exact = 0;
  double rel_error = 0;   // |mc - exact| / max(exact, tiny)
  double stderr_mc = 0;   // standard error of the MC second moment
  double z_score = 0;     // |mc - exact| / stderr
  bool within_3sigma = true;
};

ItoIsometryReport ito_isometry_check(const Ensemble& ensemble, const Vec& integrand);

/// Binary path dump: header {u64 magic, u64 steps M, u64 paths N} followed
/// by N*M little-endian increments, path-major. Regeneration from the seed
/// is bit-identical, so the dump doubles as a reproducibility artifact.
inline constexpr std::uint64_t kPathDumpMagic = 0x48544150'4C445053ULL;  // "SPDLPATH"

void write_paths_binary(const Ensemble& ensemble, const std::string& path);

struct PathDump {
  std::uint64_t steps = 0;
  std::uint64_t paths = 0;
  Mat increments;  // steps x paths
};

PathDump read_paths_binary(const std::string& path);

/// One-sample Kolmogorov-Smirnov statistic against the standard normal CDF.
/// Returns D * sqrt(m); the alpha = 0.01 asymptotic critical value is 1.628.
double ks_normal_scaled_statistic(Vec samples);

inline constexpr double kKsCritical01 = 1.628;

}  // namespace spdelab::stochastic
