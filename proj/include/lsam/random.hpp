#ifndef LSAM_RANDOM_HPP_
#define LSAM_RANDOM_HPP_

#include <cstdint>
#include <limits>
#include <random>

namespace lsam {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds from a
// master seed so that chains and predictive tasks never share a stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

// Uniform on the open interval (0, 1).
inline double open_uniform(Rng& rng) {
  double u;
  do {
    u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  } while (u <= 0.0);
  return u;
}

// Gamma(shape, rate). Very small shapes can underflow to zero; the result is
// floored at the smallest normal double so hazards stay strictly positive.
inline double gamma_draw(Rng& rng, double shape, double rate) {
  const double x = std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
  return x < std::numeric_limits<double>::min() ? std::numeric_limits<double>::min() : x;
}

}  // namespace lsam

#endif  // LSAM_RANDOM_HPP_
