#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "orthoconv/errors.hpp"

namespace orthoconv {

/// Dense row-major real matrix. Houses Toeplitz operators, selection
/// matrices and the orthogonal factors produced by the orthogonalizers.
using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Padding { circular, zero };

/// The convolution contract shared by every operator in the library.
///
/// Index convention (fixed once, used everywhere): output tap (i, j) of a
/// stride-s, dilation-d convolution reads input position
/// (i*s - i'*d, j*s - j'*d) for kernel tap (i', j'), wrapped modulo the
/// image extent under circular padding. Groups split channels into
/// contiguous blocks.
struct ConvSpec {
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  std::size_t k_h = 1;
  std::size_t k_w = 1;
  std::size_t stride = 1;
  std::size_t groups = 1;
  std::size_t dilation = 1;
  Padding padding = Padding::circular;

  std::size_t c_in_per_group() const { return c_in / groups; }
  std::size_t c_out_per_group() const { return c_out / groups; }

  void validate() const {
    detail::require(c_in > 0 && c_out > 0, "channel counts must be positive");
    detail::require(k_h > 0 && k_w > 0, "kernel extents must be positive");
    detail::require(stride > 0 && dilation > 0, "stride and dilation must be positive");
    detail::require(groups > 0, "groups must be positive");
    detail::require(c_in % groups == 0 && c_out % groups == 0,
                    "c_in and c_out must be divisible by groups");
  }

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

inline std::string to_string(Padding p) { return p == Padding::circular ? "circular" : "zero"; }

/// Convolution kernel indexed [c_out][c_in_per_group][k_h][k_w], row-major.
class KernelTensor {
 public:
  using Shape = std::array<std::size_t, 4>;

  KernelTensor() = default;

  KernelTensor(std::size_t c_out, std::size_t c_in_per_group, std::size_t k_h, std::size_t k_w,
               std::size_t groups = 1)
      : KernelTensor(Shape{c_out, c_in_per_group, k_h, k_w},
                     std::vector<double>(c_out * c_in_per_group * k_h * k_w, 0.0), groups) {}

  KernelTensor(Shape shape, std::vector<double> data, std::size_t groups = 1)
      : shape_(shape), groups_(groups), data_(std::move(data)) {
    for (auto e : shape_) detail::require(e >= 1, "kernel extents must be >= 1");
    detail::require(groups_ >= 1, "groups must be >= 1");
    detail::require(shape_[0] % groups_ == 0, "c_out must be divisible by groups");
    detail::require(data_.size() == shape_[0] * shape_[1] * shape_[2] * shape_[3],
                    "kernel data size does not match its shape");
    for (double v : data_) detail::require(std::isfinite(v), "kernel entries must be finite");
  }

  /// 1x1 identity kernel on `channels` channels.
  static KernelTensor identity(std::size_t channels) {
    KernelTensor k(channels, channels, 1, 1);
    for (std::size_t c = 0; c < channels; ++c) k(c, c, 0, 0) = 1.0;
    return k;
  }

  /// Reshape a (c_out) x (c_in * k_h * k_w) matrix into a kernel.
  static KernelTensor from_matrix(const DenseMatrix& m, std::size_t c_in, std::size_t k_h,
                                  std::size_t k_w) {
    detail::require(static_cast<std::size_t>(m.cols()) == c_in * k_h * k_w,
                    "matrix columns must equal c_in * k_h * k_w");
    KernelTensor k(static_cast<std::size_t>(m.rows()), c_in, k_h, k_w);
    std::copy(m.data(), m.data() + m.size(), k.data_.begin());
    return k;
  }

  const Shape& shape() const { return shape_; }
  std::size_t c_out() const { return shape_[0]; }
  std::size_t c_in_per_group() const { return shape_[1]; }
  std::size_t c_in() const { return shape_[1] * groups_; }
  std::size_t k_h() const { return shape_[2]; }
  std::size_t k_w() const { return shape_[3]; }
  std::size_t groups() const { return groups_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t m, std::size_t n, std::size_t i, std::size_t j) {
    return data_[offset(m, n, i, j)];
  }
  double operator()(std::size_t m, std::size_t n, std::size_t i, std::size_t j) const {
    return data_[offset(m, n, i, j)];
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  /// The (c_out) x (c_in_per_group * k_h * k_w) flattening.
  DenseMatrix as_matrix() const {
    DenseMatrix m(static_cast<Eigen::Index>(shape_[0]),
                  static_cast<Eigen::Index>(shape_[1] * shape_[2] * shape_[3]));
    std::copy(data_.begin(), data_.end(), m.data());
    return m;
  }

  KernelTensor with_groups(std::size_t groups) const { return KernelTensor(shape_, data_, groups); }

  KernelTensor& operator+=(const KernelTensor& o) {
    detail::require(shape_ == o.shape_, "kernel shapes differ");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  KernelTensor& operator-=(const KernelTensor& o) {
    detail::require(shape_ == o.shape_, "kernel shapes differ");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  KernelTensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  friend KernelTensor operator+(KernelTensor a, const KernelTensor& b) { return a += b; }
  friend KernelTensor operator-(KernelTensor a, const KernelTensor& b) { return a -= b; }
  friend KernelTensor operator*(double s, KernelTensor a) { return a *= s; }

  friend bool operator==(const KernelTensor&, const KernelTensor&) = default;

 private:
  std::size_t offset(std::size_t m, std::size_t n, std::size_t i, std::size_t j) const {
    return ((m * shape_[1] + n) * shape_[2] + i) * shape_[3] + j;
  }

  Shape shape_{1, 1, 1, 1};
  std::size_t groups_ = 1;
  std::vector<double> data_ = std::vector<double>(1, 0.0);
};

/// Single image indexed [c][h][w], row-major.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(std::size_t channels, std::size_t height, std::size_t width)
      : c_(channels), h_(height), w_(width), data_(channels * height * width, 0.0) {
    detail::require(c_ >= 1 && h_ >= 1 && w_ >= 1, "image extents must be >= 1");
  }

  std::size_t channels() const { return c_; }
  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t c, std::size_t i, std::size_t j) { return data_[(c * h_ + i) * w_ + j]; }
  double operator()(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * h_ + i) * w_ + j];
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  Vector as_vector() const { return Eigen::Map<const Vector>(data_.data(), static_cast<Eigen::Index>(data_.size())); }

  static ImageTensor from_vector(const Vector& v, std::size_t c, std::size_t h, std::size_t w) {
    detail::require(static_cast<std::size_t>(v.size()) == c * h * w, "vector size does not match image shape");
    ImageTensor x(c, h, w);
    std::copy(v.data(), v.data() + v.size(), x.data_.begin());
    return x;
  }

  ImageTensor& operator+=(const ImageTensor& o) {
    detail::require(same_shape(o), "image shapes differ");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  ImageTensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  friend ImageTensor operator+(ImageTensor a, const ImageTensor& b) { return a += b; }
  friend ImageTensor operator*(double s, ImageTensor a) { return a *= s; }

  bool same_shape(const ImageTensor& o) const { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }

 private:
  std::size_t c_ = 1;
  std::size_t h_ = 1;
  std::size_t w_ = 1;
  std::vector<double> data_ = std::vector<double>(1, 0.0);
};

/// Largest absolute entry-wise difference.
inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  detail::require(a.size() == b.size(), "size mismatch in max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const KernelTensor& a, const KernelTensor& b) {
  detail::require(a.shape() == b.shape(), "kernel shapes differ");
  return max_abs_diff(a.values(), b.values());
}

inline double max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  detail::require(a.same_shape(b), "image shapes differ");
  return max_abs_diff(a.values(), b.values());
}

}  // namespace orthoconv
