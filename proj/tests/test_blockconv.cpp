#include <gtest/gtest.h>

#include <random>

#include "orthoconv/blockconv.hpp"
#include "orthoconv/conv.hpp"
#include "orthoconv/random.hpp"
#include "test_helpers.hpp"

using namespace orthoconv;
using namespace testing_oracles;

namespace {

KernelTensor fold_naive(const std::vector<KernelTensor>& chain) {
  KernelTensor acc = chain[0];
  for (std::size_t i = 1; i < chain.size(); ++i) acc = block_conv_naive(chain[i], acc);
  return acc;
}

std::vector<KernelTensor> random_chain(std::mt19937& rng, std::size_t n, std::size_t max_c = 4, std::size_t max_k = 3) {
  std::vector<KernelTensor> chain;
  std::size_t c = pick(rng, 1, max_c);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t next = pick(rng, 1, max_c);
    chain.push_back(uniform_kernel(rng, next, c, pick(rng, 1, max_k), pick(rng, 1, max_k)));
    c = next;
  }
  return chain;
}

}  // namespace

TEST(KernelChain, ValidatesCompatibility) {
  EXPECT_THROW(KernelChain(std::vector<KernelTensor>{}), ShapeError);
  EXPECT_THROW(KernelChain({KernelTensor(3, 2, 1, 1), KernelTensor(2, 2, 1, 1)}), ShapeError);
  EXPECT_THROW(KernelChain({KernelTensor(2, 1, 1, 1, 2)}), ShapeError);
  KernelChain ok({KernelTensor(3, 2, 1, 1), KernelTensor(5, 3, 2, 2)});
  EXPECT_EQ(ok.size(), 2u);
  EXPECT_THROW(ok.push_back(KernelTensor(1, 4, 1, 1)), ShapeError);
}

TEST(BlockConvNaive, IdentityOnTheLeft) {
  const KernelTensor a = random_kernel(4, 3, 2, 3, 1);
  EXPECT_EQ(block_conv_naive(KernelTensor::identity(4), a), a);
}

TEST(BlockConvNaive, ShapeLaw) {
  const KernelTensor r = block_conv_naive(random_kernel(5, 4, 3, 3, 2), random_kernel(4, 3, 2, 2, 3));
  EXPECT_EQ(r.shape(), (KernelTensor::Shape{5, 3, 4, 4}));
}

TEST(BlockConvNaive, HandWorkedScalarCase) {
  // 1-channel kernels act as 2-D polynomials: (1 + 2z) * (3 + 4z) = 3 + 10z + 8z^2.
  KernelTensor a(1, 1, 1, 2), b(1, 1, 1, 2);
  a(0, 0, 0, 0) = 1.0;
  a(0, 0, 0, 1) = 2.0;
  b(0, 0, 0, 0) = 3.0;
  b(0, 0, 0, 1) = 4.0;
  const KernelTensor r = block_conv_naive(b, a);
  EXPECT_DOUBLE_EQ(r(0, 0, 0, 0), 3.0);
  EXPECT_DOUBLE_EQ(r(0, 0, 0, 1), 10.0);
  EXPECT_DOUBLE_EQ(r(0, 0, 0, 2), 8.0);
}

TEST(BlockConvNaive, RejectsIncompatible) {
  EXPECT_THROW(block_conv_naive(random_kernel(2, 3, 1, 1, 1), random_kernel(4, 2, 1, 1, 2)), ShapeError);
}

TEST(BlockConvNaive, FusionMatchesSequentialConvolution) {
  std::mt19937 rng(21);
  for (int t = 0; t < 20; ++t) {
    const std::size_t ci = pick(rng, 1, 4), c = pick(rng, 1, 4), co = pick(rng, 1, 4);
    const KernelTensor a = uniform_kernel(rng, c, ci, pick(rng, 1, 3), pick(rng, 1, 3));
    const KernelTensor b = uniform_kernel(rng, co, c, pick(rng, 1, 3), pick(rng, 1, 3));
    const ImageTensor x = uniform_image(rng, ci, 8, 8);
    const std::size_t s = pick(rng, 1, 2);
    EXPECT_LE(max_abs_diff(conv2d_ref(block_conv_naive(b, a), x, s), conv2d_ref(b, conv2d_ref(a, x), s)), 1e-11);
  }
}

TEST(BlockConvFast, MatchesNaive) {
  std::mt19937 rng(22);
  for (int t = 0; t < 200; ++t) {
    const std::size_t ci = pick(rng, 1, 5), c = pick(rng, 1, 5), co = pick(rng, 1, 5);
    const KernelTensor a = uniform_kernel(rng, c, ci, pick(rng, 1, 4), pick(rng, 1, 4));
    const KernelTensor b = uniform_kernel(rng, co, c, pick(rng, 1, 4), pick(rng, 1, 4));
    EXPECT_LE(max_abs_diff(block_conv_fast(b, a), block_conv_naive(b, a)), 1e-12);
  }
}

TEST(BlockConvFast, IdentityAndShapeLaw) {
  const KernelTensor a = random_kernel(4, 3, 2, 2, 4);
  EXPECT_EQ(block_conv_fast(KernelTensor::identity(4), a), a);
  EXPECT_EQ(block_conv_fast(random_kernel(5, 4, 3, 3, 5), a).shape(), (KernelTensor::Shape{5, 3, 4, 4}));
}

TEST(BlockConvBatched, SingletonEqualsFast) {
  const std::vector<KernelTensor> bs{random_kernel(3, 2, 2, 3, 6)}, as{random_kernel(2, 4, 3, 1, 7)};
  EXPECT_EQ(block_conv_batched(bs, as)[0], block_conv_fast(bs[0], as[0]));
}

TEST(BlockConvBatched, MatchesIndependentNaiveCalls) {
  std::mt19937 rng(23);
  std::vector<KernelTensor> bs, as;
  for (int i = 0; i < 4; ++i) {
    bs.push_back(uniform_kernel(rng, 3, 2, 3, 2));
    as.push_back(uniform_kernel(rng, 2, 5, 2, 3));
  }
  const auto out = block_conv_batched(bs, as);
  ASSERT_EQ(out.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_LE(max_abs_diff(out[i], block_conv_naive(bs[i], as[i])), 1e-12);
}

TEST(BlockConvBatched, RejectsBadSequences) {
  const std::vector<KernelTensor> none;
  EXPECT_THROW(block_conv_batched(none, none), ShapeError);
  const std::vector<KernelTensor> one{KernelTensor::identity(2)}, two{KernelTensor::identity(2), KernelTensor::identity(2)};
  EXPECT_THROW(block_conv_batched(one, two), ShapeError);
  const std::vector<KernelTensor> mixed{KernelTensor::identity(2), KernelTensor(2, 2, 2, 2)};
  EXPECT_THROW(block_conv_batched(mixed, two), ShapeError);
}

TEST(ScanCompose, SingleElement) {
  const KernelTensor k = random_kernel(3, 2, 2, 2, 8);
  EXPECT_EQ(scan_compose(KernelChain({k})), k);
}

TEST(ScanCompose, MatchesSequentialFold) {
  std::mt19937 rng(24);
  for (std::size_t n = 1; n <= 9; ++n) {
    const auto chain = random_chain(rng, n);
    std::size_t rounds = 0;
    const KernelTensor r = scan_compose(KernelChain(chain), &rounds);
    EXPECT_LE(max_abs_diff(r, fold_naive(chain)), 1e-11) << "n=" << n;
    EXPECT_EQ(rounds, static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(n)))));
    EXPECT_LE(max_abs_diff(compose_sequential(KernelChain(chain)), fold_naive(chain)), 1e-11);
  }
}

TEST(ScanCompose, IdentityChain) {
  for (std::size_t n : {1u, 2u, 5u, 8u}) {
    const std::vector<KernelTensor> chain(n, KernelTensor::identity(3));
    EXPECT_EQ(scan_compose(KernelChain(chain)), KernelTensor::identity(3));
  }
}

TEST(BlockConvLaws, Associativity) {
  std::mt19937 rng(25);
  for (int t = 0; t < 20; ++t) {
    const auto ch = random_chain(rng, 3);
    const KernelTensor left = block_conv_naive(block_conv_naive(ch[2], ch[1]), ch[0]);
    const KernelTensor right = block_conv_naive(ch[2], block_conv_naive(ch[1], ch[0]));
    EXPECT_LE(max_abs_diff(left, right), 1e-11);
  }
}

TEST(BlockConvLaws, Bilinearity) {
  std::mt19937 rng(26);
  for (int t = 0; t < 20; ++t) {
    const KernelTensor a = uniform_kernel(rng, 3, 2, 2, 3), b = uniform_kernel(rng, 3, 2, 2, 3);
    const KernelTensor c = uniform_kernel(rng, 2, 4, 3, 1);
    const double l1 = 0.3, l2 = -2.1;
    EXPECT_LE(max_abs_diff(block_conv_naive(l1 * a + l2 * b, c),
                           l1 * block_conv_naive(a, c) + l2 * block_conv_naive(b, c)),
              1e-11);
    const KernelTensor d = uniform_kernel(rng, 5, 3, 2, 2);
    EXPECT_LE(max_abs_diff(block_conv_naive(d, l1 * a + l2 * b),
                           l1 * block_conv_naive(d, a) + l2 * block_conv_naive(d, b)),
              1e-11);
  }
}

TEST(BlockConvLaws, NonCommutativeWitness) {
  const KernelTensor a = random_kernel(2, 2, 2, 2, 100);
  const KernelTensor b = random_kernel(2, 2, 2, 2, 101);
  EXPECT_GT(max_abs_diff(block_conv_naive(a, b), block_conv_naive(b, a)), 0.1);
}

TEST(BlockConvLaws, TransposeAntiHomomorphism) {
  std::mt19937 rng(27);
  for (int t = 0; t < 20; ++t) {
    const auto ch = random_chain(rng, 2);
    EXPECT_LE(max_abs_diff(kernel_transpose(block_conv_naive(ch[1], ch[0])),
                           block_conv_naive(kernel_transpose(ch[0]), kernel_transpose(ch[1]))),
              1e-11);
  }
}

TEST(BlockConvLaws, StridedCompositionSemantics) {
  std::mt19937 rng(28);
  for (int t = 0; t < 20; ++t) {
    const auto ch = random_chain(rng, 2);
    const std::size_t s = pick(rng, 2, 3);
    const ImageTensor x = uniform_image(rng, ch[0].c_in(), 4 * s, 4 * s);
    EXPECT_LE(max_abs_diff(conv2d_ref(block_conv_fast(ch[1], ch[0]), x, s), conv2d_ref(ch[1], conv2d_ref(ch[0], x), s)),
              1e-11);
  }
}
