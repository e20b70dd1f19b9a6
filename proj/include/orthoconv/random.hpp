#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "orthoconv/tensor.hpp"

namespace orthoconv {

/// Seeded standard-normal stream.
///
/// Algorithm (stable across versions): std::mt19937_64 seeded with the
/// 64-bit seed; each pair of 53-bit uniforms u1 in (0, 1], u2 in [0, 1)
/// yields two normals through the Box-Muller transform
/// sqrt(-2 ln u1) * (cos 2 pi u2, sin 2 pi u2). std::normal_distribution is
/// avoided because its output is implementation defined.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// splitmix64 finalizer; derives independent sub-seeds from (seed, index).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline KernelTensor random_kernel(std::size_t c_out, std::size_t c_in_per_group, std::size_t k_h, std::size_t k_w,
                                  std::uint64_t seed, std::size_t groups = 1) {
  KernelTensor k(c_out, c_in_per_group, k_h, k_w, groups);
  GaussianStream g(seed);
  for (double& v : k.values()) v = g.next();
  return k;
}

inline ImageTensor random_image(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  ImageTensor x(c, h, w);
  GaussianStream g(seed);
  for (double& v : x.values()) v = g.next();
  return x;
}

}  // namespace orthoconv
