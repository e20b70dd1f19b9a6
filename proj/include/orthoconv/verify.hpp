#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "orthoconv/blockconv.hpp"
#include "orthoconv/conv.hpp"
#include "orthoconv/orthogonalize.hpp"
#include "orthoconv/random.hpp"
#include "orthoconv/tensor.hpp"

namespace orthoconv {

inline constexpr std::size_t kToeplitzBudget = std::size_t{1} << 24;
inline constexpr std::size_t kSvdBudget = 2048;
inline constexpr double kDefaultTolerance = 1e-4;

namespace detail {

inline void check_toeplitz_budget(std::size_t rows, std::size_t cols) {
  if (rows * cols > kToeplitzBudget)
    throw ShapeError("toeplitz matrix of " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " exceeds the 2^24 entry budget");
}

}  // namespace detail

/// Dense matrix of Π_s T_K on [c_in][h][w] inputs, built column by column
/// from the impulse responses conv2d_ref(K, e_{c,i,j}).
inline DenseMatrix toeplitz_from_kernel(const KernelTensor& K, const ConvSpec& spec, std::size_t h, std::size_t w) {
  detail::require<UnsupportedConfiguration>(spec.padding == Padding::circular,
                                            "toeplitz construction requires circular padding");
  detail::require(h % spec.stride == 0 && w % spec.stride == 0, "image extents must be divisible by the stride");
  const std::size_t cols = spec.c_in * h * w;
  const std::size_t rows = spec.c_out * (h / spec.stride) * (w / spec.stride);
  detail::check_toeplitz_budget(rows, cols);
  DenseMatrix T(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  ImageTensor e(spec.c_in, h, w);
  for (std::size_t col = 0; col < cols; ++col) {
    e.values()[col] = 1.0;
    const ImageTensor y = conv2d_ref(K, e, spec);
    e.values()[col] = 0.0;
    for (std::size_t r = 0; r < rows; ++r) T(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) = y.values()[r];
  }
  return T;
}

/// Dense matrix of conv2d_transpose_ref on [c_out][h/s][w/s] inputs; equals
/// toeplitz_from_kernel(K, spec, h, w)ᵀ.
inline DenseMatrix toeplitz_transpose_from_kernel(const KernelTensor& K, const ConvSpec& spec, std::size_t h,
                                                  std::size_t w) {
  detail::require<UnsupportedConfiguration>(spec.padding == Padding::circular,
                                            "toeplitz construction requires circular padding");
  detail::require(h % spec.stride == 0 && w % spec.stride == 0, "image extents must be divisible by the stride");
  const std::size_t oh = h / spec.stride, ow = w / spec.stride;
  const std::size_t cols = spec.c_out * oh * ow;
  const std::size_t rows = spec.c_in * h * w;
  detail::check_toeplitz_budget(rows, cols);
  DenseMatrix T(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  ImageTensor e(spec.c_out, oh, ow);
  for (std::size_t col = 0; col < cols; ++col) {
    e.values()[col] = 1.0;
    const ImageTensor y = conv2d_transpose_ref(K, e, spec);
    e.values()[col] = 0.0;
    for (std::size_t r = 0; r < rows; ++r) T(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) = y.values()[r];
  }
  return T;
}

/// Singular values, descending, from the eigenvalues of the smaller Gram
/// matrix (Eigen's self-adjoint solver).
inline std::vector<double> singular_values(const DenseMatrix& M) {
  const auto small = static_cast<std::size_t>(std::min(M.rows(), M.cols()));
  detail::require(small <= kSvdBudget, "singular_values: min(rows, cols) exceeds 2048");
  detail::require(M.allFinite(), "singular_values: non-finite entries");
  const Eigen::MatrixXd G = M.rows() <= M.cols() ? Eigen::MatrixXd(M * M.transpose())
                                                 : Eigen::MatrixXd(M.transpose() * M);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("singular_values: eigensolver failed");
  std::vector<double> out(small);
  for (std::size_t i = 0; i < small; ++i) out[i] = std::sqrt(std::max(0.0, es.eigenvalues()[static_cast<Eigen::Index>(i)]));
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

/// Singular values, descending, by one-sided Jacobi rotations. Independent
/// of singular_values; used to cross-check it.
inline std::vector<double> singular_values_jacobi(const DenseMatrix& M, int max_sweeps = 60) {
  Eigen::MatrixXd A = M.rows() >= M.cols() ? Eigen::MatrixXd(M) : Eigen::MatrixXd(M.transpose());
  const Eigen::Index n = A.cols();
  detail::require(static_cast<std::size_t>(n) <= kSvdBudget, "singular_values: min(rows, cols) exceeds 2048");
  const double eps = 1e-15;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = A.col(p).squaredNorm();
        const double beta = A.col(q).squaredNorm();
        const double gamma = A.col(p).dot(A.col(q));
        if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        const Eigen::VectorXd ap = A.col(p);
        A.col(p) = c * ap - s * A.col(q);
        A.col(q) = s * ap + c * A.col(q);
      }
    if (!rotated) break;
  }
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] = A.col(j).norm();
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

struct SpectrumReport {
  double sigma_max = 0.0;
  double sigma_min = 0.0;
  double residual_inf = 0.0;
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  bool pass = false;
  double tolerance = kDefaultTolerance;
};

inline nlohmann::json to_json(const SpectrumReport& r) {
  return {{"sigma_max", r.sigma_max}, {"sigma_min", r.sigma_min}, {"residual_inf", r.residual_inf},
          {"n_rows", r.n_rows},       {"n_cols", r.n_cols},       {"pass", r.pass},
          {"tolerance", r.tolerance}};
}

/// Report for an already assembled operator matrix.
inline SpectrumReport spectrum_report(const DenseMatrix& T, double tolerance = kDefaultTolerance) {
  const auto sv = singular_values(T);
  SpectrumReport r;
  r.n_rows = static_cast<std::size_t>(T.rows());
  r.n_cols = static_cast<std::size_t>(T.cols());
  r.sigma_max = sv.front();
  r.sigma_min = sv.back();
  r.residual_inf = orthogonality_residual(T);
  r.tolerance = tolerance;
  r.pass = std::max(std::abs(r.sigma_max - 1.0), std::abs(r.sigma_min - 1.0)) <= tolerance;
  return r;
}

inline SpectrumReport check_orthogonality(const KernelTensor& K, const ConvSpec& spec, std::size_t h = 8,
                                          std::size_t w = 8, double tolerance = kDefaultTolerance) {
  return spectrum_report(toeplitz_from_kernel(K, spec, h, w), tolerance);
}

enum class Roundtrip {
  conv_after_transpose,  // conv(convT(x)) = x, holds for row orthogonal kernels
  transpose_after_conv,  // convT(conv(x)) = x, holds for column orthogonal kernels
};

/// Largest ‖·‖∞ roundtrip error over `n_trials` seeded Gaussian inputs.
inline double roundtrip_check(const KernelTensor& K, const ConvSpec& spec, std::size_t h = 8, std::size_t w = 8,
                              std::size_t n_trials = 4, Roundtrip direction = Roundtrip::conv_after_transpose,
                              std::uint64_t seed = 0) {
  detail::require(h % spec.stride == 0 && w % spec.stride == 0, "image extents must be divisible by the stride");
  double worst = 0.0;
  for (std::size_t t = 0; t < n_trials; ++t) {
    if (direction == Roundtrip::conv_after_transpose) {
      const ImageTensor x = random_image(spec.c_out, h / spec.stride, w / spec.stride, mix_seed(seed, t));
      worst = std::max(worst, max_abs_diff(conv2d_ref(K, conv2d_transpose_ref(K, x, spec), spec), x));
    } else {
      const ImageTensor x = random_image(spec.c_in, h, w, mix_seed(seed, t));
      worst = std::max(worst, max_abs_diff(conv2d_transpose_ref(K, conv2d_ref(K, x, spec), spec), x));
    }
  }
  return worst;
}

/// Product over the chain of power-iteration estimates of each factor's
/// operator norm on h×w inputs. The last factor is applied with `stride`,
/// the others with stride 1. An upper bound on σ_max of the fused kernel,
/// tight only when every factor is 1-Lipschitz.
inline double product_bound(const KernelChain& chain, std::size_t stride = 1, std::size_t h = 8, std::size_t w = 8,
                            std::size_t dilation = 1) {
  detail::require(!chain.empty(), "product_bound: empty chain");
  double bound = 1.0;
  for (std::size_t f = 0; f < chain.size(); ++f) {
    const KernelTensor& K = chain[f];
    const ConvSpec spec = spec_for(K, f + 1 == chain.size() ? stride : 1, dilation);
    const std::size_t oh = h / spec.stride, ow = w / spec.stride;
    Vector v = power_start(K.c_in() * h * w);
    bound *= power_iteration(
        [&](const Vector& x) { return conv2d_ref(K, ImageTensor::from_vector(x, K.c_in(), h, w), spec).as_vector(); },
        [&](const Vector& y) {
          return conv2d_transpose_ref(K, ImageTensor::from_vector(y, K.c_out(), oh, ow), spec).as_vector();
        },
        v);
  }
  return bound;
}

/// L2 certified radius (logit[label] − max_{i≠label} logit[i]) / √2 of a
/// 1-Lipschitz classifier; negative when misclassified.
inline double robustness_certificate(std::span<const double> logits, std::size_t label) {
  detail::require(logits.size() >= 2, "robustness_certificate needs at least two logits");
  detail::require(label < logits.size(), "label out of range");
  double runner_up = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (i != label) runner_up = std::max(runner_up, logits[i]);
  return (logits[label] - runner_up) / std::sqrt(2.0);
}

inline double robustness_certificate(const std::vector<double>& logits, std::size_t label) {
  return robustness_certificate(std::span<const double>(logits), label);
}

}  // namespace orthoconv
