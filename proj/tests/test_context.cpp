#include <gtest/gtest.h>

#include <cmath>

#include "sslse/context.hpp"

using namespace sslse;
using D = double;

namespace {

double masked_fraction(std::size_t n, const MaskConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  auto m = sample_span_mask(n, cfg, rng);
  return static_cast<double>(std::count(m.begin(), m.end(), true)) / static_cast<double>(n);
}

// K+1 masked frames; every context row is e_0 and target t is e_{t+1}, so
// every similarity is zero and no two targets coincide.
struct Orthogonal {
  Tensor<D> context, targets;
  std::vector<bool> mask;
};

Orthogonal orthogonal_setup(std::size_t k) {
  const std::size_t n = k + 1, d = k + 2;
  Orthogonal o{Tensor<D>(Shape{n, d}), Tensor<D>(Shape{n, d}), std::vector<bool>(n, true)};
  for (std::size_t t = 0; t < n; ++t) {
    o.context[t * d] = 1.0;
    o.targets[t * d + t + 1] = 1.0;
  }
  return o;
}

}  // namespace

TEST(Masking, FractionMatchesSpanOverlapFormula) {
  // a frame stays unmasked iff none of the `span` starts covering it fire
  const MaskConfig cfg{0.065, 10};
  const double expected = 1.0 - std::pow(1.0 - cfg.p, static_cast<double>(cfg.span));
  EXPECT_NEAR(expected, 0.489, 0.001);
  // one 10^4-frame draw has a spread of about 0.014, so check the mean over
  // many draws and how often a single draw lands within 0.02
  constexpr int kDraws = 200;
  double mean = 0;
  int within = 0;
  for (std::uint64_t seed = 1; seed <= kDraws; ++seed) {
    const double f = masked_fraction(10000, cfg, seed);
    mean += f / kDraws;
    within += std::abs(f - 0.489) <= 0.02;
  }
  EXPECT_NEAR(mean, expected, 0.003);
  EXPECT_GE(within, kDraws * 3 / 4);
}

TEST(Masking, ExtremeProbabilities) {
  EXPECT_EQ(masked_fraction(500, {0.0, 10}, 1), 0.0);
  EXPECT_EQ(masked_fraction(500, {1.0, 1}, 1), 1.0);
  EXPECT_THROW(masked_fraction(10, {1.5, 1}, 1), std::invalid_argument);
  EXPECT_THROW(masked_fraction(10, {0.5, 0}, 1), std::invalid_argument);
}

TEST(Masking, SpansAreContiguousRunsOfAtLeastSpanLength) {
  Rng rng(4);
  auto m = sample_span_mask(2000, {0.02, 7}, rng);
  std::size_t run = 0;
  for (std::size_t t = 0; t <= m.size(); ++t) {
    if (t < m.size() && m[t]) {
      ++run;
    } else {
      if (run > 0 && t < m.size()) EXPECT_GE(run, 7u);
      run = 0;
    }
  }
}

TEST(Masking, ApplyMaskReplacesExactlyMaskedRows) {
  Rng rng(5);
  Tensor<D> z(Shape{50, 3});
  for (auto& v : z.values()) v = rng.uniform(-1, 1);
  Tensor<D> emb(Shape{3}, {7, 8, 9});
  auto r = apply_mask(z, {0.1, 4}, emb, rng);
  for (std::size_t t = 0; t < 50; ++t)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(r.z[t * 3 + j], r.mask[t] ? emb[j] : z[t * 3 + j]);
}

TEST(Transformer, ZeroWeightsGiveTheIdentity) {
  Rng rng(1);
  TransformerParams<D> p({2, 8, 2, 16, 32}, rng);
  for (auto np : p.parameters()) std::fill(np.tensor.values().begin(), np.tensor.values().end(), 0.0);
  Tensor<D> z(Shape{5, 8});
  for (auto& v : z.values()) v = rng.uniform(-1, 1);
  std::vector<Tensor<D>> layers;
  auto out = contextualize(z, p, &layers);
  EXPECT_EQ(out.values(), z.values());
  ASSERT_EQ(layers.size(), 2u);
  for (const auto& l : layers) EXPECT_EQ(l.values(), z.values());
}

TEST(Transformer, RejectsTooManyFrames) {
  Rng rng(2);
  TransformerParams<D> p({1, 4, 2, 8, 3}, rng);
  EXPECT_THROW(contextualize(Tensor<D>::zeros({4, 4}), p), DimensionError);
  EXPECT_THROW(contextualize(Tensor<D>::zeros({2, 5}), p), DimensionError);
}

TEST(Contrastive, EqualSimilaritiesGiveLogKPlusOne) {
  for (std::size_t k : {1u, 5u, 100u}) {
    auto o = orthogonal_setup(k);
    LossWeights w;
    w.distractors = k;
    Rng rng(3);
    EXPECT_NEAR(contrastive_loss(o.context, o.targets, o.mask, w, rng).item(), std::log(k + 1.0), 1e-6) << k;
  }
}

TEST(Contrastive, PerfectSeparationClosedForm) {
  // sim+ = 1, all K = 100 distractors at −1, κ = 0.1
  Tensor<D> sims(Shape{1, 101}, std::vector<D>(101, -1.0));
  sims[0] = 1.0;
  const double expected = std::log1p(100.0 * std::exp(-20.0));
  EXPECT_NEAR(expected, 2.06e-7, 0.01e-7);
  EXPECT_NEAR(contrastive_from_similarities(sims, 0.1).item(), expected, 1e-12);
}

TEST(Contrastive, TwoFrameSeparationThroughTheFullLoss) {
  // c0 = q0 = v, c1 = q1 = −v: each frame has cos+ = 1 and its one distractor at −1
  Tensor<D> c(Shape{2, 3}, {1, 2, 2, -1, -2, -2});
  LossWeights w;
  w.distractors = 1;
  Rng rng(4);
  EXPECT_NEAR(contrastive_loss(c, c, {true, true}, w, rng).item(), std::log1p(std::exp(-20.0)), 1e-13);
}

TEST(Contrastive, ScaleInvariant) {
  Rng data(5);
  Tensor<D> c(Shape{12, 6}), q(Shape{12, 6});
  for (auto& v : c.values()) v = data.uniform(-1, 1);
  for (auto& v : q.values()) v = data.uniform(-1, 1);
  std::vector<bool> mask(12, false);
  for (std::size_t t = 2; t < 10; ++t) mask[t] = true;
  LossWeights w;
  w.distractors = 5;
  Rng r1(6), r2(6);
  const double a = contrastive_loss(c, q, mask, w, r1).item();
  const double b = contrastive_loss(scale(c, 13.0), scale(q, 0.02), mask, w, r2).item();
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(Contrastive, IdenticalDistractorsAreExcluded) {
  // all targets equal: with exclusion the positive is alone in its softmax
  Tensor<D> c(Shape{4, 2}, {1, 0, 0, 1, 1, 1, -1, 0});
  auto q = Tensor<D>::full(Shape{4, 2}, 0.5);
  std::vector<bool> mask(4, true);
  LossWeights w;
  w.distractors = 3;
  Rng r1(7), r2(7);
  EXPECT_NEAR(contrastive_loss(c, q, mask, w, r1, true).item(), 0.0, 1e-12);
  EXPECT_NEAR(contrastive_loss(c, q, mask, w, r2, false).item(), std::log(4.0), 1e-12);
}

TEST(Contrastive, NeedsTwoMaskedFrames) {
  Tensor<D> c(Shape{3, 2}, {1, 0, 0, 1, 1, 1});
  LossWeights w;
  Rng rng(8);
  EXPECT_THROW(contrastive_loss(c, c, {true, false, false}, w, rng), std::invalid_argument);
}

TEST(LossAssembly, UnitComponentsGiveWeightedSums) {
  LossWeights w;
  LossComponents<D> ew2, joint;
  for (const char* k : {"L_m", "L_d", "L_f", "L_c"}) ew2[k] = Tensor<D>::scalar(1.0);
  for (const char* k : {"L_ms", "L_d", "L_f", "L_cs", "L_SE"}) joint[k] = Tensor<D>::scalar(1.0);
  EXPECT_NEAR(total_pretrain_loss(ew2, w, BranchVariant::EW2).total.item(), 12.1, 1e-12);
  for (auto v : {BranchVariant::SEW2, BranchVariant::EW2_SEW2, BranchVariant::EW2_SEW2_CONCAT}) {
    auto t = total_pretrain_loss(joint, w, v);
    EXPECT_NEAR(t.total.item(), 12.2, 1e-12);
    for (const char* k : {"L_ms", "L_d", "L_f", "L_cs", "L_SE", "total"}) EXPECT_TRUE(t.report.has(k)) << k;
  }
}

TEST(LossAssembly, MissingComponentIsNamed) {
  LossComponents<D> parts{{"L_m", Tensor<D>::scalar(1.0)}};
  try {
    total_pretrain_loss(parts, LossWeights{}, BranchVariant::EW2);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("L_d"), std::string::npos) << e.what();
  }
}
