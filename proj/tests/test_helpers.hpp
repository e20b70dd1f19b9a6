#pragma once

// Independent oracles shared by the unit and acceptance tests. None of
// these call into the code paths they are used to check.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "orthoconv/tensor.hpp"

namespace testing_oracles {

using orthoconv::ConvSpec;
using orthoconv::DenseMatrix;
using orthoconv::ImageTensor;
using orthoconv::KernelTensor;

inline std::size_t wrap(long long v, std::size_t n) {
  const auto m = static_cast<long long>(n);
  return static_cast<std::size_t>(((v % m) + m) % m);
}

/// Π_s T_K written straight from the index formula (circular padding).
inline DenseMatrix dense_conv_matrix(const KernelTensor& K, const ConvSpec& spec, std::size_t h, std::size_t w) {
  const std::size_t s = spec.stride, d = spec.dilation;
  const std::size_t oh = h / s, ow = w / s;
  const std::size_t cin_g = spec.c_in / spec.groups, cout_g = spec.c_out / spec.groups;
  DenseMatrix T = DenseMatrix::Zero(static_cast<Eigen::Index>(spec.c_out * oh * ow),
                                    static_cast<Eigen::Index>(spec.c_in * h * w));
  for (std::size_t m = 0; m < spec.c_out; ++m)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const auto row = static_cast<Eigen::Index>((m * oh + i) * ow + j);
        for (std::size_t c = 0; c < cin_g; ++c)
          for (std::size_t a = 0; a < spec.k_h; ++a)
            for (std::size_t b = 0; b < spec.k_w; ++b) {
              const std::size_t si = wrap(static_cast<long long>(i * s) - static_cast<long long>(a * d), h);
              const std::size_t sj = wrap(static_cast<long long>(j * s) - static_cast<long long>(b * d), w);
              const std::size_t ch = (m / cout_g) * cin_g + c;
              T(row, static_cast<Eigen::Index>((ch * h + si) * w + sj)) += K(m, c, a, b);
            }
      }
  return T;
}

inline double inner(const ImageTensor& a, const ImageTensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.values()[i] * b.values()[i];
  return acc;
}

/// Singular values by power iteration on MᵀM with Hotelling deflation.
inline std::vector<double> singular_values_by_deflation(const Eigen::MatrixXd& M, int iters = 3000) {
  Eigen::MatrixXd G = M.transpose() * M;
  std::vector<double> out;
  std::mt19937_64 rng(42);
  std::normal_distribution<double> nd;
  for (Eigen::Index k = 0; k < G.rows(); ++k) {
    Eigen::VectorXd v(G.rows());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = nd(rng);
    v.normalize();
    double lambda = 0.0;
    for (int t = 0; t < iters; ++t) {
      Eigen::VectorXd u = G * v;
      const double n = u.norm();
      if (n == 0.0) break;
      v = u / n;
      lambda = v.dot(G * v);
    }
    out.push_back(std::sqrt(std::max(0.0, lambda)));
    G -= lambda * v * v.transpose();
  }
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

/// Random ungrouped kernel with uniform entries in [-1, 1] from std::mt19937.
inline KernelTensor uniform_kernel(std::mt19937& rng, std::size_t co, std::size_t ci, std::size_t kh, std::size_t kw) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  KernelTensor k(co, ci, kh, kw);
  for (double& v : k.values()) v = u(rng);
  return k;
}

inline ImageTensor uniform_image(std::mt19937& rng, std::size_t c, std::size_t h, std::size_t w) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ImageTensor x(c, h, w);
  for (double& v : x.values()) v = u(rng);
  return x;
}

inline std::size_t pick(std::mt19937& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace testing_oracles
