#include <gtest/gtest.h>

#include "sslse/fusion.hpp"

using namespace sslse;
using D = double;

namespace {

Tensor<D> random(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<D> t(std::move(s));
  for (auto& v : t.values()) v = rng.uniform(-1, 1);
  return t;
}

}  // namespace

TEST(Fusion, ZeroProjectionGivesZeroOutput) {
  Rng rng(1);
  LinearParams<D> proj(16, 8, rng);
  std::fill(proj.w.values().begin(), proj.w.values().end(), 0.0);
  std::fill(proj.b.values().begin(), proj.b.values().end(), 0.0);
  auto out = fuse_concat(random({5, 8}, 2), random({5, 8}, 3), proj);
  for (auto v : out.values()) EXPECT_EQ(v, 0.0);

  DualAttentionParams<D> dual(8, 2, rng);
  for (auto* lin : {&dual.en_out, &dual.noisy_out}) {
    std::fill(lin->w.values().begin(), lin->w.values().end(), 0.0);
    std::fill(lin->b.values().begin(), lin->b.values().end(), 0.0);
  }
  auto out2 = fuse_dual_attention(random({5, 8}, 2), random({5, 8}, 3), dual);
  for (auto v : out2.values()) EXPECT_EQ(v, 0.0);
}

TEST(Fusion, IdentityOverZeroConcatProjectionSelectsEnhanced) {
  Rng rng(4);
  const std::size_t d = 6;
  LinearParams<D> proj(2 * d, d, rng);
  // rows [0, d) act on z_en, rows [d, 2d) on z_noisy
  std::fill(proj.w.values().begin(), proj.w.values().end(), 0.0);
  std::fill(proj.b.values().begin(), proj.b.values().end(), 0.0);
  for (std::size_t i = 0; i < d; ++i) proj.w[i * d + i] = 1.0;
  auto en = random({4, d}, 5), noisy = random({4, d}, 6);
  auto out = fuse_concat(en, noisy, proj);
  EXPECT_EQ(out.values(), en.values());
}

TEST(Fusion, AttentionRowsSumToOne) {
  Rng rng(7);
  MultiheadParams<D> p(8, 4, rng);
  std::vector<Tensor<D>> weights;
  multihead(random({3, 8}, 8), random({5, 8}, 9), random({5, 8}, 9), p, &weights);
  ASSERT_EQ(weights.size(), 4u);
  for (const auto& a : weights) {
    ASSERT_EQ(a.shape(), (Shape{3, 5}));
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 5; ++j) s += a[i * 5 + j];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Fusion, SingleKeyAttentionReturnsItsValue) {
  Rng rng(10);
  MultiheadParams<D> p(4, 2, rng);
  auto kv = random({1, 4}, 11);
  auto out = multihead(random({3, 4}, 12), kv, kv, p);
  auto expected = matmul(matmul(kv, p.wv), p.wo);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out[t * 4 + j], expected[j], 1e-12);
}

TEST(Fusion, DualAttentionMatchesItsTwoTerms) {
  Rng rng(13);
  DualAttentionParams<D> p(8, 2, rng);
  auto en = random({4, 8}, 14), noisy = random({4, 8}, 15);
  auto out = fuse_dual_attention(en, noisy, p);
  auto left = p.en_out(multihead(en, noisy, noisy, p.en_queries));
  auto right = p.noisy_out(multihead(noisy, en, en, p.noisy_queries));
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], left[i] + right[i], 1e-12);
}

TEST(Fusion, MismatchedStreamsAreRejected) {
  Rng rng(16);
  DualAttentionParams<D> p(8, 2, rng);
  EXPECT_THROW(fuse_dual_attention(random({4, 8}, 1), random({5, 8}, 2), p), DimensionError);
  EXPECT_THROW(MultiheadParams<D>(6, 4, rng), std::invalid_argument);
}
