#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "orthoconv/blockconv.hpp"
#include "orthoconv/conv.hpp"
#include "orthoconv/orthogonalize.hpp"
#include "orthoconv/random.hpp"
#include "orthoconv/tensor.hpp"
#include "orthoconv/verify.hpp"

namespace orthoconv {

/// How unconstrained parameters are initialized before orthogonalization.
/// `orthogonal` is the standard orthogonal layer init; `gaussian` draws
/// i.i.d. normals and leaves all the work to the scheme.
enum class ParamInit { orthogonal, gaussian };

inline std::string to_string(ParamInit p) { return p == ParamInit::orthogonal ? "orthogonal" : "gaussian"; }

inline ParamInit param_init_from_string(const std::string& s) {
  if (s == "orthogonal") return ParamInit::orthogonal;
  if (s == "gaussian") return ParamInit::gaussian;
  throw ShapeError("unknown init \"" + s + "\"");
}

/// Deterministic supplier of orthogonal factors. Draw n uses the sub-seed
/// mix_seed(seed, n); drawn() counts the unconstrained scalars consumed.
class ParamSource {
 public:
  explicit ParamSource(std::uint64_t seed, OrthoOptions options = {}, ParamInit init = ParamInit::orthogonal)
      : seed_(seed), options_(options), init_(init) {
    options_.validate();
  }

  DenseMatrix raw(std::size_t rows, std::size_t cols) {
    const std::uint64_t sub = mix_seed(seed_, draws_++);
    drawn_ += rows * cols;
    return init_ == ParamInit::orthogonal ? orthogonal_init(rows, cols, sub) : sample_params(rows, cols, sub);
  }

  /// Row orthogonal if rows ≤ cols, column orthogonal otherwise. The
  /// exponential scheme only handles square factors; rectangular ones fall
  /// back to bjorck.
  DenseMatrix orthogonal(std::size_t rows, std::size_t cols) {
    OrthoOptions opts = options_;
    if (opts.scheme == Scheme::exponential && rows != cols) {
      opts.scheme = Scheme::bjorck;
      opts.iters = OrthoOptions{}.iters;
    }
    return orthogonalize(raw(rows, cols), opts);
  }

  std::size_t drawn() const { return drawn_; }
  const OrthoOptions& options() const { return options_; }

 private:
  std::uint64_t seed_;
  OrthoOptions options_;
  ParamInit init_;
  std::uint64_t draws_ = 0;
  std::size_t drawn_ = 0;
};

/// 1x1 kernel whose channel matrix is `m` (c_out = rows, c_in = cols).
inline KernelTensor matrix_kernel(const DenseMatrix& m) {
  return KernelTensor::from_matrix(m, static_cast<std::size_t>(m.cols()), 1, 1);
}

/// 1x2 kernel [N, I−N].
inline KernelTensor horizontal_projector_kernel(const ProjectorPair& p) {
  const auto c = static_cast<std::size_t>(p.N.rows());
  KernelTensor k(c, c, 1, 2);
  for (std::size_t m = 0; m < c; ++m)
    for (std::size_t n = 0; n < c; ++n) {
      k(m, n, 0, 0) = p.N(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
      k(m, n, 0, 1) = p.complement(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    }
  return k;
}

/// 2x1 kernel [N; I−N].
inline KernelTensor vertical_projector_kernel(const ProjectorPair& p) {
  const auto c = static_cast<std::size_t>(p.N.rows());
  KernelTensor k(c, c, 2, 1);
  for (std::size_t m = 0; m < c; ++m)
    for (std::size_t n = 0; n < c; ++n) {
      k(m, n, 0, 0) = p.N(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
      k(m, n, 1, 0) = p.complement(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    }
  return k;
}

namespace detail {

inline ProjectorPair draw_projector(ParamSource& src, std::size_t c) {
  return projector_pair(src.orthogonal(c, c / 2));
}

inline void check_bcop_sizes(std::size_t c_in, std::size_t c_out, std::size_t k1, std::size_t k2) {
  require(c_in >= 1 && c_out >= 1 && k1 >= 1 && k2 >= 1, "bcop: sizes must be positive");
}

}  // namespace detail

/// BCOP factors in application order. The projectors act at width
/// c = max(c_in, c_out): the 1x1 map M (c_out x c_in) is applied first when
/// c_out ≥ c_in and last otherwise. Vertical and horizontal projectors
/// alternate, (k1−1) and (k2−1) of them. M is drawn before the projectors.
inline KernelChain bcop_factors(std::size_t c_in, std::size_t c_out, std::size_t k1, std::size_t k2,
                                ParamSource& src) {
  detail::check_bcop_sizes(c_in, c_out, k1, k2);
  const std::size_t c = std::max(c_in, c_out);
  if ((k1 > 1 || k2 > 1) && c < 2)
    throw UnsupportedConfiguration("bcop needs at least 2 channels for kernels larger than 1x1");
  KernelTensor m = matrix_kernel(src.orthogonal(c_out, c_in));
  std::vector<KernelTensor> projectors;
  for (std::size_t i = 1; i < std::max(k1, k2); ++i) {
    if (i < k1) projectors.push_back(vertical_projector_kernel(detail::draw_projector(src, c)));
    if (i < k2) projectors.push_back(horizontal_projector_kernel(detail::draw_projector(src, c)));
  }
  std::vector<KernelTensor> chain;
  if (c_out >= c_in) {
    chain.push_back(std::move(m));
    chain.insert(chain.end(), projectors.begin(), projectors.end());
  } else {
    chain = std::move(projectors);
    chain.push_back(std::move(m));
  }
  return KernelChain(std::move(chain));
}

inline KernelTensor bcop_kernel(std::size_t c_in, std::size_t c_out, std::size_t k1, std::size_t k2,
                                ParamSource& src) {
  return scan_compose(bcop_factors(c_in, c_out, k1, k2, src));
}

/// SC-Fac order: the (k1−1) vertical projectors at width c_in are applied
/// first, then M, then the (k2−1) horizontal projectors at width c_out.
inline KernelChain scfac_factors(std::size_t c_in, std::size_t c_out, std::size_t k1, std::size_t k2,
                                 ParamSource& src) {
  detail::check_bcop_sizes(c_in, c_out, k1, k2);
  if ((k1 > 1 && c_in < 2) || (k2 > 1 && c_out < 2))
    throw UnsupportedConfiguration("scfac needs at least 2 channels on each projector side");
  KernelTensor m = matrix_kernel(src.orthogonal(c_out, c_in));
  std::vector<KernelTensor> vertical, horizontal;
  for (std::size_t i = 1; i < k1; ++i) vertical.push_back(vertical_projector_kernel(detail::draw_projector(src, c_in)));
  for (std::size_t i = 1; i < k2; ++i)
    horizontal.push_back(horizontal_projector_kernel(detail::draw_projector(src, c_out)));
  std::vector<KernelTensor> chain(vertical.rbegin(), vertical.rend());
  chain.push_back(std::move(m));
  chain.insert(chain.end(), horizontal.begin(), horizontal.end());
  return KernelChain(std::move(chain));
}

inline KernelTensor scfac_kernel(std::size_t c_in, std::size_t c_out, std::size_t k1, std::size_t k2,
                                 ParamSource& src) {
  return scan_compose(scfac_factors(c_in, c_out, k1, k2, src));
}

/// Orthogonalized c_out x (c_in·k1·k2) matrix reshaped into a kernel.
/// Orthogonal as a convolution when k1 = k2 = stride.
inline KernelTensor rko_kernel(std::size_t c_in, std::size_t c_out, std::size_t k1, std::size_t k2,
                               ParamSource& src) {
  detail::require(c_in >= 1 && c_out >= 1 && k1 >= 1 && k2 >= 1, "rko: sizes must be positive");
  return KernelTensor::from_matrix(src.orthogonal(c_out, c_in * k1 * k2), c_in, k1, k2);
}

enum class Ordering { bcop, scfac };

inline std::string to_string(Ordering o) { return o == Ordering::bcop ? "bcop" : "scfac"; }

inline Ordering ordering_from_string(const std::string& s) {
  if (s == "bcop") return Ordering::bcop;
  if (s == "scfac") return Ordering::scfac;
  throw ShapeError("unknown ordering \"" + s + "\"");
}

/// AOC decision tree branches.
enum class Branch {
  bcop,           // (a) s = 1
  rko,            // (b) k = s
  strided_bcop,   // (c) stride applied directly on a full-size BCOP kernel
  rko_of_bcop,    // (d) rko(s x s) ⊡ bcop(k−s+1)
};

inline std::string to_string(Branch b) {
  switch (b) {
    case Branch::bcop: return "a:bcop";
    case Branch::rko: return "b:rko";
    case Branch::strided_bcop: return "c:strided_bcop";
    case Branch::rko_of_bcop: return "d:rko_of_bcop";
  }
  return "unknown";
}

/// Branch taken by each group.
struct BranchTag {
  std::vector<Branch> per_group;

  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < per_group.size(); ++i) out += (i ? "," : "") + to_string(per_group[i]);
    return out;
  }
  bool all(Branch b) const {
    return std::all_of(per_group.begin(), per_group.end(), [b](Branch x) { return x == b; });
  }
};

struct AocConfig {
  ConvSpec spec;
  OrthoOptions ortho;
  std::uint64_t seed = 0;
  Ordering ordering = Ordering::bcop;
  ParamInit init = ParamInit::orthogonal;
  std::optional<std::size_t> internal_width;  // branch (d) only
  bool allow_direct_stride = true;            // enables branch (c)

  void validate() const {
    spec.validate();
    ortho.validate();
    if (spec.padding != Padding::circular)
      throw UnsupportedConfiguration("orthogonal kernels are only defined under circular padding");
    if (spec.stride > spec.k_h || spec.stride > spec.k_w)
      throw UnsupportedConfiguration("no orthogonal kernel exists when the stride exceeds the kernel size");
  }
};

struct AocKernel {
  KernelTensor kernel;
  BranchTag branch;
  /// Per-group factors in application order; the stride acts on the last.
  std::vector<KernelChain> factors;
  /// Internal width c of branch (d), per group (0 for other branches).
  std::vector<std::size_t> internal_widths;
};

/// Default internal width of branch (d): max(c_in, ⌊c_out/s²⌋).
inline std::size_t aoc_internal_width(std::size_t c_in, std::size_t c_out, std::size_t stride) {
  return std::max(c_in, c_out / (stride * stride));
}

/// Branch (d) composes two same-orientation orthogonal factors only when c
/// lies between c_in and c_out/s² (in either order).
inline void validate_internal_width(std::size_t c, std::size_t c_in, std::size_t c_out, std::size_t stride) {
  const std::size_t s2 = stride * stride;
  const bool row_case = c_out <= c_in * s2;
  const bool ok = row_case ? (c * s2 >= c_out && c <= c_in) : (c >= c_in && c * s2 <= c_out);
  if (!ok)
    throw ShapeError("internal width " + std::to_string(c) + " outside [" + std::to_string(std::min(c_in, c_out / s2)) +
                     ", " + std::to_string(std::max(c_in, c_out / s2)) + "]");
}

/// Smallest multiple of `stride` that is at least 8.
inline std::size_t desk_size(std::size_t stride) { return ((8 + stride - 1) / stride) * stride; }

namespace detail {

struct GroupKernel {
  KernelTensor kernel;
  Branch branch;
  KernelChain factors;
  std::size_t internal_width = 0;
};

inline KernelChain sub_factors(Ordering ordering, std::size_t c_in, std::size_t c_out, std::size_t k1, std::size_t k2,
                               ParamSource& src) {
  return ordering == Ordering::bcop ? bcop_factors(c_in, c_out, k1, k2, src)
                                    : scfac_factors(c_in, c_out, k1, k2, src);
}

inline GroupKernel build_group(const AocConfig& cfg, std::uint64_t seed) {
  const ConvSpec& spec = cfg.spec;
  const std::size_t ci = spec.c_in_per_group(), co = spec.c_out_per_group();
  const std::size_t k1 = spec.k_h, k2 = spec.k_w, s = spec.stride, d = spec.dilation;

  if (k1 == s && k2 == s && (s == 1 || d == 1)) {
    ParamSource src(seed, cfg.ortho, cfg.init);
    KernelTensor k = rko_kernel(ci, co, k1, k2, src);
    return {k, Branch::rko, KernelChain({k})};
  }
  if (std::max(ci, co) < 2)
    throw UnsupportedConfiguration("depthwise kernels larger than the stride cannot be built with BCOP, which needs "
                                   "at least 2 channels per group");
  if (s == 1) {
    ParamSource src(seed, cfg.ortho, cfg.init);
    KernelChain f = sub_factors(cfg.ordering, ci, co, k1, k2, src);
    return {scan_compose(f), Branch::bcop, f};
  }
  if (co <= ci && (cfg.allow_direct_stride || d > 1)) {
    ParamSource src(seed, cfg.ortho, cfg.init);
    KernelChain f = sub_factors(cfg.ordering, ci, co, k1, k2, src);
    KernelTensor k = scan_compose(f);
    const std::size_t n = desk_size(s);
    if (check_orthogonality(k, spec_for(k, s, d), n, n).pass) return {k, Branch::strided_bcop, f};
  }
  if (d > 1)
    throw UnsupportedConfiguration("stride and dilation both above 1 are only supported when c_out <= c_in per group");

  const std::size_t c = cfg.internal_width.value_or(aoc_internal_width(ci, co, s));
  validate_internal_width(c, ci, co, s);
  if (c < 2)
    throw UnsupportedConfiguration("internal width below 2 cannot host a BCOP kernel");
  ParamSource src(seed, cfg.ortho, cfg.init);
  std::vector<KernelTensor> chain = sub_factors(cfg.ordering, ci, c, k1 - s + 1, k2 - s + 1, src).kernels();
  chain.push_back(rko_kernel(c, co, s, s, src));
  KernelChain f(std::move(chain));
  return {scan_compose(f), Branch::rko_of_bcop, f, c};
}

}  // namespace detail

/// Orthogonal kernel for `cfg.spec`: one branch per group, group i seeded
/// with seed + i, group kernels stacked along c_out. The result is row
/// orthogonal when c_out ≤ c_in·s² and column orthogonal otherwise; the
/// dilation lives in the spec only.
inline AocKernel aoc_kernel(const AocConfig& cfg) {
  cfg.validate();
  const std::size_t g = cfg.spec.groups;
  AocKernel out;
  std::vector<double> data;
  for (std::size_t i = 0; i < g; ++i) {
    detail::GroupKernel gk = detail::build_group(cfg, cfg.seed + i);
    data.insert(data.end(), gk.kernel.values().begin(), gk.kernel.values().end());
    out.branch.per_group.push_back(gk.branch);
    out.factors.push_back(std::move(gk.factors));
    out.internal_widths.push_back(gk.internal_width);
  }
  out.kernel = KernelTensor({cfg.spec.c_out, cfg.spec.c_in_per_group(), cfg.spec.k_h, cfg.spec.k_w}, std::move(data), g);
  return out;
}

/// Kernel and specs of the transposed layer. conv2d_transpose_ref(kernel,
/// ·, spec) applies (Π_s T_K)ᵀ, mapping [c_out][h/s][w/s] to [c_in][h][w];
/// `layer` describes that map with the channel counts swapped.
struct TransposedConv {
  KernelTensor kernel;
  ConvSpec spec;
  ConvSpec layer;

  ImageTensor operator()(const ImageTensor& x) const { return conv2d_transpose_ref(kernel, x, spec); }
};

inline TransposedConv transpose_kernel_for(const KernelTensor& K, const ConvSpec& spec) {
  detail::check_kernel_matches(K, spec);
  ConvSpec layer = spec;
  std::swap(layer.c_in, layer.c_out);
  return {K, spec, layer};
}

/// K − Kᵀ in the kernel sense; the centred operator of an odd kernel turns
/// skew symmetric.
inline KernelTensor skew_symmetrize(const KernelTensor& K) {
  detail::require(K.c_in() == K.c_out(), "skew_symmetrize needs c_in == c_out");
  return K - kernel_transpose(K);
}

/// Σ over taps of the spectral norm of the tap's channel matrix; bounds the
/// operator norm of the convolution from above.
inline double kernel_norm_bound(const KernelTensor& K) {
  detail::require(K.groups() == 1, "kernel_norm_bound expects an ungrouped kernel");
  double bound = 0.0;
  DenseMatrix tap(static_cast<Eigen::Index>(K.c_out()), static_cast<Eigen::Index>(K.c_in()));
  for (std::size_t i = 0; i < K.k_h(); ++i)
    for (std::size_t j = 0; j < K.k_w(); ++j) {
      for (std::size_t m = 0; m < K.c_out(); ++m)
        for (std::size_t n = 0; n < K.c_in(); ++n)
          tap(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)) = K(m, n, i, j);
      if (tap.cwiseAbs().maxCoeff() > 0.0) bound += spectral_norm(tap);
    }
  return bound;
}

namespace detail {

/// Centred identity: δ at the middle tap of a size x size kernel.
inline KernelTensor centered_identity(std::size_t c, std::size_t size_h, std::size_t size_w) {
  KernelTensor k(c, c, size_h, size_w);
  for (std::size_t m = 0; m < c; ++m) k(m, m, size_h / 2, size_w / 2) = 1.0;
  return k;
}

}  // namespace detail

/// Truncated ⊡-exponential I + K + K⊡K/2! + … + K^{⊡terms}/terms!, with
/// every power embedded about the centre of the final kernel of size
/// terms·(k−1)+1. Evaluated in Horner form
/// H ← I + (1/j) K ⊡ H for j = terms, …, 1.
///
/// The odd kernel size makes the centred operator well defined; applying
/// the result equals Shift^{terms·r} Σ_j C^j/j! where C is the centred
/// operator of K and r = (k−1)/2.
inline KernelTensor soc_explicit_kernel(const KernelTensor& K, int terms = 12) {
  detail::require(K.groups() == 1, "soc: kernel must be ungrouped");
  detail::require(K.c_in() == K.c_out(), "soc: kernel must have c_in == c_out");
  detail::require(K.k_h() % 2 == 1 && K.k_w() % 2 == 1, "soc: kernel extents must be odd");
  detail::require(terms >= 1, "soc: terms must be >= 1");
  const std::size_t c = K.c_out();
  KernelTensor h = KernelTensor::identity(c);
  for (int j = terms; j >= 1; --j) {
    KernelTensor next = (1.0 / j) * block_conv_fast(K, h);
    next += detail::centered_identity(c, next.k_h(), next.k_w());
    h = std::move(next);
  }
  return h;
}

/// Orthogonal kernel exp(S) for a random skew kernel S scaled so its
/// norm bound is 1.
inline KernelTensor soc_kernel(std::size_t channels, std::size_t k, std::uint64_t seed, int terms = 12) {
  detail::require(k % 2 == 1, "soc: kernel size must be odd");
  KernelTensor s = skew_symmetrize(random_kernel(channels, channels, k, k, seed));
  const double bound = kernel_norm_bound(s);
  if (bound > 0.0) s *= 1.0 / bound;
  return soc_explicit_kernel(s, terms);
}

}  // namespace orthoconv
