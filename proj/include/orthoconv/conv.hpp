#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "orthoconv/tensor.hpp"

namespace orthoconv {

/// ConvSpec describing `kernel` applied with the given stride and dilation.
inline ConvSpec spec_for(const KernelTensor& kernel, std::size_t stride = 1, std::size_t dilation = 1,
                         Padding padding = Padding::circular) {
  ConvSpec spec;
  spec.c_in = kernel.c_in();
  spec.c_out = kernel.c_out();
  spec.k_h = kernel.k_h();
  spec.k_w = kernel.k_w();
  spec.stride = stride;
  spec.groups = kernel.groups();
  spec.dilation = dilation;
  spec.padding = padding;
  return spec;
}

namespace detail {

inline void check_kernel_matches(const KernelTensor& k, const ConvSpec& spec) {
  spec.validate();
  require(k.groups() == spec.groups, "kernel groups do not match spec");
  require(k.c_out() == spec.c_out, "kernel c_out does not match spec");
  require(k.c_in_per_group() == spec.c_in_per_group(), "kernel c_in per group does not match spec");
  require(k.k_h() == spec.k_h && k.k_w() == spec.k_w, "kernel size does not match spec");
}

/// Position read by tap t of output o: o*s - t*d, wrapped (circular) or
/// rejected (zero padding, returns nullopt).
inline std::optional<std::size_t> source_index(std::size_t o, std::size_t t, std::size_t s, std::size_t d,
                                               std::size_t extent, Padding padding) {
  const auto pos = static_cast<long long>(o * s) - static_cast<long long>(t * d);
  const auto n = static_cast<long long>(extent);
  if (padding == Padding::zero) {
    if (pos < 0 || pos >= n) return std::nullopt;
    return static_cast<std::size_t>(pos);
  }
  return static_cast<std::size_t>(((pos % n) + n) % n);
}

}  // namespace detail

/// Direct-summation strided, grouped, dilated 2-D convolution. This is the
/// reference operator every fast path and every Toeplitz matrix is checked
/// against.
inline ImageTensor conv2d_ref(const KernelTensor& kernel, const ImageTensor& x, const ConvSpec& spec) {
  detail::check_kernel_matches(kernel, spec);
  detail::require(x.channels() == spec.c_in, "input channels do not match spec.c_in");
  const std::size_t s = spec.stride;
  const std::size_t d = spec.dilation;
  detail::require(x.height() % s == 0 && x.width() % s == 0, "image extents must be divisible by the stride");

  const std::size_t h = x.height(), w = x.width();
  const std::size_t oh = h / s, ow = w / s;
  const std::size_t cin_g = spec.c_in_per_group(), cout_g = spec.c_out_per_group();
  ImageTensor y(spec.c_out, oh, ow);

  for (std::size_t m = 0; m < spec.c_out; ++m) {
    const std::size_t c0 = (m / cout_g) * cin_g;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cin_g; ++c) {
          for (std::size_t ti = 0; ti < spec.k_h; ++ti) {
            const auto si = detail::source_index(i, ti, s, d, h, spec.padding);
            if (!si) continue;
            for (std::size_t tj = 0; tj < spec.k_w; ++tj) {
              const auto sj = detail::source_index(j, tj, s, d, w, spec.padding);
              if (!sj) continue;
              acc += kernel(m, c, ti, tj) * x(c0 + c, *si, *sj);
            }
          }
        }
        y(m, i, j) = acc;
      }
    }
  }
  return y;
}

inline ImageTensor conv2d_ref(const KernelTensor& kernel, const ImageTensor& x, std::size_t stride = 1,
                              std::size_t dilation = 1) {
  return conv2d_ref(kernel, x, spec_for(kernel, stride, dilation));
}

/// Adjoint of conv2d_ref: maps [c_out][h/s][w/s] to [c_in][h][w] by
/// applying (Pi_s T_K)^T. Implemented as the scatter dual of the gather
/// in conv2d_ref.
inline ImageTensor conv2d_transpose_ref(const KernelTensor& kernel, const ImageTensor& x, const ConvSpec& spec) {
  detail::check_kernel_matches(kernel, spec);
  detail::require(x.channels() == spec.c_out, "transposed conv input channels must equal spec.c_out");
  const std::size_t s = spec.stride;
  const std::size_t d = spec.dilation;
  const std::size_t oh = x.height(), ow = x.width();
  const std::size_t h = oh * s, w = ow * s;
  const std::size_t cin_g = spec.c_in_per_group(), cout_g = spec.c_out_per_group();
  ImageTensor y(spec.c_in, h, w);

  for (std::size_t m = 0; m < spec.c_out; ++m) {
    const std::size_t c0 = (m / cout_g) * cin_g;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        const double v = x(m, i, j);
        if (v == 0.0) continue;
        for (std::size_t c = 0; c < cin_g; ++c) {
          for (std::size_t ti = 0; ti < spec.k_h; ++ti) {
            const auto si = detail::source_index(i, ti, s, d, h, spec.padding);
            if (!si) continue;
            for (std::size_t tj = 0; tj < spec.k_w; ++tj) {
              const auto sj = detail::source_index(j, tj, s, d, w, spec.padding);
              if (!sj) continue;
              y(c0 + c, *si, *sj) += kernel(m, c, ti, tj) * v;
            }
          }
        }
      }
    }
  }
  return y;
}

inline ImageTensor conv2d_transpose_ref(const KernelTensor& kernel, const ImageTensor& x, std::size_t stride = 1,
                                        std::size_t dilation = 1) {
  return conv2d_transpose_ref(kernel, x, spec_for(kernel, stride, dilation));
}

/// Swap the channel axes and reverse both spatial axes:
/// K^T[n][m][i][j] = K[m][n][k_h-1-i][k_w-1-j].
///
/// Under the anchored index convention the convolution by K^T equals the
/// adjoint of the convolution by K followed by a circular shift of
/// ((k_h-1)*d, (k_w-1)*d); the shift vanishes for 1x1 kernels. Within the
/// block-convolution algebra the transposed kernel is exact:
/// K (x) K^T is the centred identity whenever T_K is row orthogonal.
inline KernelTensor kernel_transpose(const KernelTensor& k) {
  detail::require(k.groups() == 1, "kernel_transpose expects an ungrouped kernel");
  KernelTensor t(k.c_in(), k.c_out(), k.k_h(), k.k_w());
  for (std::size_t m = 0; m < k.c_out(); ++m)
    for (std::size_t n = 0; n < k.c_in(); ++n)
      for (std::size_t i = 0; i < k.k_h(); ++i)
        for (std::size_t j = 0; j < k.k_w(); ++j) t(n, m, i, j) = k(m, n, k.k_h() - 1 - i, k.k_w() - 1 - j);
  return t;
}

/// Circular roll of every channel: out(c, i, j) = x(c, i - di, j - dj).
inline ImageTensor roll(const ImageTensor& x, long long di, long long dj) {
  ImageTensor y(x.channels(), x.height(), x.width());
  const auto h = static_cast<long long>(x.height()), w = static_cast<long long>(x.width());
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (long long i = 0; i < h; ++i)
      for (long long j = 0; j < w; ++j) {
        const auto ti = static_cast<std::size_t>((((i + di) % h) + h) % h);
        const auto tj = static_cast<std::size_t>((((j + dj) % w) + w) % w);
        y(c, ti, tj) = x(c, static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      }
  return y;
}

}  // namespace orthoconv
