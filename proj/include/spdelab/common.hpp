#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace spdelab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Thrown when an operation's preconditions are violated (bad arguments,
/// mismatched grids, hypothesis failures). Carries a human-readable reason.
struct invalid_input : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Thrown when an evaluation point leaves the admissible space-time domain.
struct domain_error : std::domain_error {
  using std::domain_error::domain_error;
};

/// Thrown on numerical failures (singular geometry, failed linear solves).
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kPi = 3.14159265358979323846;

/// 1/e, the right endpoint of the sigma weight's domain.
inline constexpr double kInvE = 0.36787944117144233;

inline double sq(double x) { return x * x; }

/// FNV-1a over a byte string; used for config provenance hashes.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace spdelab
