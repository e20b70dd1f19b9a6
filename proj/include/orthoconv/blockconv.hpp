#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "orthoconv/tensor.hpp"

namespace orthoconv {

/// Ordered sequence of ungrouped kernels, chain[0] applied first. Adjacent
/// kernels are channel compatible: chain[i+1].c_in() == chain[i].c_out().
class KernelChain {
 public:
  KernelChain() = default;
  explicit KernelChain(std::vector<KernelTensor> kernels) : kernels_(std::move(kernels)) { validate(); }

  void push_back(KernelTensor k) {
    kernels_.push_back(std::move(k));
    validate_tail();
  }

  std::size_t size() const { return kernels_.size(); }
  bool empty() const { return kernels_.empty(); }
  const KernelTensor& operator[](std::size_t i) const { return kernels_[i]; }
  auto begin() const { return kernels_.begin(); }
  auto end() const { return kernels_.end(); }
  const std::vector<KernelTensor>& kernels() const { return kernels_; }

 private:
  void validate() const {
    detail::require(!kernels_.empty(), "kernel chain must not be empty");
    for (std::size_t i = 0; i < kernels_.size(); ++i) {
      detail::require(kernels_[i].groups() == 1, "kernel chain elements must be ungrouped");
      if (i > 0)
        detail::require(kernels_[i].c_in() == kernels_[i - 1].c_out(),
                        "kernel chain elements are not channel compatible");
    }
  }
  void validate_tail() const {
    const auto& k = kernels_.back();
    detail::require(k.groups() == 1, "kernel chain elements must be ungrouped");
    if (kernels_.size() > 1)
      detail::require(k.c_in() == kernels_[kernels_.size() - 2].c_out(),
                      "kernel chain elements are not channel compatible");
  }

  std::vector<KernelTensor> kernels_;
};

/// Block convolution B (x) A by the literal summation
///   R[m][n][i][j] = sum_c sum_{i',j'} B[m][c][i'][j'] A[c][n][i-i'][j-j']
/// with A zero outside its support. Applying R equals applying A then B.
inline KernelTensor block_conv_naive(const KernelTensor& b, const KernelTensor& a) {
  detail::require(a.groups() == 1 && b.groups() == 1, "block_conv_naive expects ungrouped kernels");
  detail::require(b.c_in() == a.c_out(), "block_conv: c_in of B must equal c_out of A");
  const std::size_t rh = a.k_h() + b.k_h() - 1, rw = a.k_w() + b.k_w() - 1;
  KernelTensor r(b.c_out(), a.c_in(), rh, rw);
  for (std::size_t m = 0; m < b.c_out(); ++m)
    for (std::size_t n = 0; n < a.c_in(); ++n)
      for (std::size_t i = 0; i < rh; ++i)
        for (std::size_t j = 0; j < rw; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < b.c_in(); ++c)
            for (std::size_t ti = 0; ti < b.k_h(); ++ti) {
              if (ti > i || i - ti >= a.k_h()) continue;
              for (std::size_t tj = 0; tj < b.k_w(); ++tj) {
                if (tj > j || j - tj >= a.k_w()) continue;
                acc += b(m, c, ti, tj) * a(c, n, i - ti, j - tj);
              }
            }
          r(m, n, i, j) = acc;
        }
  return r;
}

namespace detail {

/// Dense 4-axis buffer [n][c][h][w] for the cross-correlation below.
struct Tensor4 {
  std::size_t n = 0, c = 0, h = 0, w = 0;
  std::vector<double> data;

  Tensor4(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_)
      : n(n_), c(c_), h(h_), w(w_), data(n_ * c_ * h_ * w_, 0.0) {}
  double& at(std::size_t a, std::size_t b, std::size_t i, std::size_t j) { return data[((a * c + b) * h + i) * w + j]; }
  double at(std::size_t a, std::size_t b, std::size_t i, std::size_t j) const {
    return data[((a * c + b) * h + i) * w + j];
  }
};

/// Grouped, stride-1, zero-padded 2-D cross-correlation (the usual deep
/// learning "conv2d"), computed by im2col and one GEMM per group:
///   out[b][o][y][x] = sum_{ch, u, v} weight[o][ch][u][v] * in[b][g*C/G + ch][y+u-pad_h][x+v-pad_w]
inline Tensor4 cross_correlate(const Tensor4& in, const Tensor4& weight, std::size_t groups, std::size_t pad_h,
                               std::size_t pad_w) {
  require(in.c % groups == 0 && weight.n % groups == 0, "cross_correlate: channels not divisible by groups");
  require(weight.c == in.c / groups, "cross_correlate: weight channels do not match input");
  require(in.h + 2 * pad_h >= weight.h && in.w + 2 * pad_w >= weight.w, "cross_correlate: kernel larger than input");
  const std::size_t oh = in.h + 2 * pad_h - weight.h + 1;
  const std::size_t ow = in.w + 2 * pad_w - weight.w + 1;
  const std::size_t cpg = in.c / groups, opg = weight.n / groups;
  const std::size_t patch = cpg * weight.h * weight.w;
  const std::size_t cols = in.n * oh * ow;

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Tensor4 out(in.n, weight.n, oh, ow);
  RowMat col(static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(cols));
  for (std::size_t g = 0; g < groups; ++g) {
    col.setZero();
    for (std::size_t ch = 0; ch < cpg; ++ch)
      for (std::size_t u = 0; u < weight.h; ++u)
        for (std::size_t v = 0; v < weight.w; ++v) {
          const auto row = static_cast<Eigen::Index>((ch * weight.h + u) * weight.w + v);
          for (std::size_t b = 0; b < in.n; ++b)
            for (std::size_t y = 0; y < oh; ++y) {
              const long long iy = static_cast<long long>(y + u) - static_cast<long long>(pad_h);
              if (iy < 0 || iy >= static_cast<long long>(in.h)) continue;
              for (std::size_t x = 0; x < ow; ++x) {
                const long long ix = static_cast<long long>(x + v) - static_cast<long long>(pad_w);
                if (ix < 0 || ix >= static_cast<long long>(in.w)) continue;
                col(row, static_cast<Eigen::Index>((b * oh + y) * ow + x)) =
                    in.at(b, g * cpg + ch, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
            }
        }
    Eigen::Map<const RowMat> w(weight.data.data() + g * opg * patch, static_cast<Eigen::Index>(opg),
                               static_cast<Eigen::Index>(patch));
    const RowMat res = w * col;
    for (std::size_t o = 0; o < opg; ++o)
      for (std::size_t b = 0; b < in.n; ++b)
        for (std::size_t p = 0; p < oh * ow; ++p)
          out.data[((b * out.c + g * opg + o) * oh * ow) + p] =
              res(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(b * oh * ow + p));
  }
  return out;
}

}  // namespace detail

/// Block convolution as a single grouped cross-correlation: A with its two
/// channel axes swapped is the input batch, B spatially flipped is the
/// weight, the padding is full (k_B - 1 on each side) and the two leading
/// axes of the result are swapped back.
///
/// With groups = g, `b` holds g stacked kernels of shape (c_o, c, kb_h, kb_w)
/// along its output axis and `a` holds g stacked kernels of shape
/// (c, c_i, ka_h, ka_w) along its output axis; the result stacks the g
/// products B_q (x) A_q along its output axis. groups = 1 is the plain
/// product and agrees with block_conv_naive up to summation order.
inline KernelTensor block_conv_fast(const KernelTensor& b, const KernelTensor& a, std::size_t groups = 1) {
  detail::require(a.groups() == 1, "block_conv_fast: A must be ungrouped (stacked along c_out)");
  detail::require(groups >= 1 && b.c_out() % groups == 0, "block_conv_fast: c_out of B not divisible by groups");
  detail::require(b.c_in_per_group() * groups == a.c_out(), "block_conv: c_in of B must equal c_out of A");

  detail::Tensor4 input(a.c_in(), a.c_out(), a.k_h(), a.k_w());
  for (std::size_t c = 0; c < a.c_out(); ++c)
    for (std::size_t n = 0; n < a.c_in(); ++n)
      for (std::size_t i = 0; i < a.k_h(); ++i)
        for (std::size_t j = 0; j < a.k_w(); ++j) input.at(n, c, i, j) = a(c, n, i, j);

  detail::Tensor4 weight(b.c_out(), b.c_in_per_group(), b.k_h(), b.k_w());
  for (std::size_t m = 0; m < b.c_out(); ++m)
    for (std::size_t c = 0; c < b.c_in_per_group(); ++c)
      for (std::size_t i = 0; i < b.k_h(); ++i)
        for (std::size_t j = 0; j < b.k_w(); ++j) weight.at(m, c, i, j) = b(m, c, b.k_h() - 1 - i, b.k_w() - 1 - j);

  const detail::Tensor4 out = detail::cross_correlate(input, weight, groups, b.k_h() - 1, b.k_w() - 1);

  KernelTensor r(b.c_out(), a.c_in(), out.h, out.w);
  for (std::size_t n = 0; n < out.n; ++n)
    for (std::size_t m = 0; m < out.c; ++m)
      for (std::size_t i = 0; i < out.h; ++i)
        for (std::size_t j = 0; j < out.w; ++j) r(m, n, i, j) = out.at(n, m, i, j);
  return r;
}

/// Element-wise B_q (x) A_q for equal-length sequences of identically shaped
/// kernels, computed in one grouped call.
inline std::vector<KernelTensor> block_conv_batched(std::span<const KernelTensor> bs,
                                                    std::span<const KernelTensor> as) {
  detail::require(!bs.empty(), "block_conv_batched: empty input");
  detail::require(bs.size() == as.size(), "block_conv_batched: sequences differ in length");
  const std::size_t g = bs.size();
  for (std::size_t q = 0; q < g; ++q) {
    detail::require(bs[q].groups() == 1 && as[q].groups() == 1, "block_conv_batched: kernels must be ungrouped");
    detail::require(bs[q].shape() == bs[0].shape(), "block_conv_batched: B kernels differ in shape");
    detail::require(as[q].shape() == as[0].shape(), "block_conv_batched: A kernels differ in shape");
  }
  detail::require(bs[0].c_in() == as[0].c_out(), "block_conv: c_in of B must equal c_out of A");
  if (g == 1) return {block_conv_fast(bs[0], as[0])};

  const auto stack = [g](std::span<const KernelTensor> ks) {
    const auto& s = ks[0].shape();
    std::vector<double> data;
    data.reserve(g * ks[0].size());
    for (const auto& k : ks) data.insert(data.end(), k.values().begin(), k.values().end());
    return KernelTensor({s[0] * g, s[1], s[2], s[3]}, std::move(data));
  };
  const KernelTensor fused = block_conv_fast(stack(bs), stack(as), g);

  std::vector<KernelTensor> out;
  out.reserve(g);
  const std::size_t per = fused.size() / g;
  const auto& s = fused.shape();
  for (std::size_t q = 0; q < g; ++q) {
    std::vector<double> data(fused.values().begin() + static_cast<std::ptrdiff_t>(q * per),
                             fused.values().begin() + static_cast<std::ptrdiff_t>((q + 1) * per));
    out.emplace_back(KernelTensor::Shape{s[0] / g, s[1], s[2], s[3]}, std::move(data));
  }
  return out;
}

inline std::vector<KernelTensor> block_conv_batched(const std::vector<KernelTensor>& bs,
                                                    const std::vector<KernelTensor>& as) {
  return block_conv_batched(std::span<const KernelTensor>(bs), std::span<const KernelTensor>(as));
}

/// chain[n-1] (x) ... (x) chain[0] folded one element at a time.
inline KernelTensor compose_sequential(const KernelChain& chain) {
  detail::require(!chain.empty(), "compose_sequential: empty chain");
  KernelTensor acc = chain[0];
  for (std::size_t i = 1; i < chain.size(); ++i) acc = block_conv_fast(chain[i], acc);
  return acc;
}

/// chain[n-1] (x) ... (x) chain[0] by tree reduction: every round fuses
/// adjacent pairs (chain[2i+1] (x) chain[2i]) and carries an odd tail
/// unchanged, so ceil(log2 n) rounds are needed. Pairs of identical shapes
/// within a round are fused in one batched call.
inline KernelTensor scan_compose(const KernelChain& chain, std::size_t* rounds = nullptr) {
  detail::require(!chain.empty(), "scan_compose: empty chain");
  std::vector<KernelTensor> level = chain.kernels();
  std::size_t n_rounds = 0;
  while (level.size() > 1) {
    const std::size_t pairs = level.size() / 2;
    std::vector<KernelTensor> next(pairs + level.size() % 2);

    using Key = std::pair<KernelTensor::Shape, KernelTensor::Shape>;
    std::map<Key, std::vector<std::size_t>> buckets;
    for (std::size_t p = 0; p < pairs; ++p)
      buckets[{level[2 * p + 1].shape(), level[2 * p].shape()}].push_back(p);
    for (const auto& [key, idx] : buckets) {
      std::vector<KernelTensor> bs, as;
      for (std::size_t p : idx) {
        bs.push_back(level[2 * p + 1]);
        as.push_back(level[2 * p]);
      }
      auto fused = block_conv_batched(bs, as);
      for (std::size_t t = 0; t < idx.size(); ++t) next[idx[t]] = std::move(fused[t]);
    }
    if (level.size() % 2 == 1) next.back() = std::move(level.back());
    level = std::move(next);
    ++n_rounds;
  }
  if (rounds) *rounds = n_rounds;
  return level.front();
}

}  // namespace orthoconv
