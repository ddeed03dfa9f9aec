#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace lowramp {

using Eigen::MatrixXd;
using Eigen::VectorXd;
// Row-major variant for per-node stacks (row(i) is contiguous).
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Failure modes share one base so callers can catch everything numeric at once.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidPrior : Error { using Error::Error; };
struct RankUnsupported : Error { using Error::Error; };
struct NonConvergentIntegral : Error { using Error::Error; };
struct UnsupportedValue : Error { using Error::Error; };
struct NonIntegrableChannel : Error { using Error::Error; };
struct ProbabilityOutOfRange : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct DivergedEstimates : Error { using Error::Error; };
struct NonPSDOrderParam : Error { using Error::Error; };
struct GridTooCoarse : Error { using Error::Error; };
struct NoInformativeFixedPoint : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Independent stream per (seed, stream) pair; rows of an instance each get one
// so parallel fills stay schedule-independent.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return std::mt19937_64(mix_seed(seed, stream));
}

inline double log1pexp(double x) {
  if (x > 36.0) return x;
  if (x < -36.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double logaddexp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  double hi = std::max(a, b), lo = std::min(a, b);
  return hi + log1pexp(lo - hi);
}

inline double log_cosh(double z) {
  double az = std::fabs(z);
  return az + log1pexp(-2.0 * az) - M_LN2;
}

inline double sgn(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

inline void check_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeMismatch(what);
}

}  // namespace lowramp
