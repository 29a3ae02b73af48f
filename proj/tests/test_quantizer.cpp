#include <gtest/gtest.h>

#include <cmath>

#include "sslse/quantizer.hpp"

using namespace sslse;
using D = double;

namespace {

Tensor<D> uniform_usage(std::size_t g, std::size_t v) {
  return Tensor<D>::full(Shape{g, v}, 1.0 / static_cast<double>(v));
}

}  // namespace

TEST(Quantizer, DiversityAtUniformUsageClosedForm) {
  for (auto [g, v] : {std::pair<std::size_t, std::size_t>{1, 2}, {2, 16}, {2, 320}}) {
    const double expected = -std::log(static_cast<double>(v)) / static_cast<double>(v);
    EXPECT_NEAR(diversity_loss(uniform_usage(g, v)).item(), expected, 1e-9) << g << "x" << v;
    EXPECT_NEAR(diversity_loss(uniform_usage(g, v), DiversitySign::Entropy).item(), 0.0, 1e-9);
  }
}

TEST(Quantizer, UniformUsageMinimizesDiversityLoss) {
  Rng rng(3);
  const double floor = diversity_loss(uniform_usage(2, 8)).item();
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<D> logits(Shape{2, 8});
    for (auto& x : logits.values()) x = rng.uniform(-2, 2);
    auto p = softmax(logits);
    EXPECT_GE(diversity_loss(p).item(), floor - 1e-12);
    EXPECT_GE(diversity_loss(p, DiversitySign::Entropy).item(), -1e-12);
  }
}

TEST(Quantizer, DiversityOfCollapsedUsageIsZero) {
  Tensor<D> p(Shape{2, 4}, {1, 0, 0, 0, 0, 0, 1, 0});
  EXPECT_DOUBLE_EQ(diversity_loss(p).item(), 0.0);
  EXPECT_NEAR(diversity_loss(p, DiversitySign::Entropy).item(), (8.0 - 2.0) / 8.0, 1e-12);
}

TEST(Quantizer, DiversityRejectsNonDistributions) {
  EXPECT_THROW(diversity_loss(Tensor<D>::full(Shape{1, 4}, 0.5)), std::domain_error);
  EXPECT_THROW(diversity_loss(Tensor<D>(Shape{1, 2}, {1.5, -0.5})), std::domain_error);
}

TEST(Quantizer, TemperatureAnneals) {
  QuantizerConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.temperature_at(0), 2.0);
  EXPECT_NEAR(cfg.temperature_at(1000), 2.0 * std::pow(0.999995, 1000), 1e-12);
  EXPECT_DOUBLE_EQ(cfg.temperature_at(100000000), 0.5);
  Rng rng(1);
  CodebookState<float> s(cfg, rng);
  EXPECT_DOUBLE_EQ(s.tau, 2.0);
  double prev = s.tau;
  for (int i = 0; i < 5; ++i) {
    const double t = anneal_temperature(s);
    EXPECT_LT(t, prev);
    prev = t;
  }
  EXPECT_EQ(s.step, 5u);
}

TEST(Quantizer, HardSelectionPicksCodewords) {
  Rng rng(2);
  QuantizerConfig cfg{2, 4, 3, 5, 6};
  CodebookState<D> s(cfg, rng);
  Tensor<D> z(Shape{3, 5});
  for (auto& v : z.values()) v = rng.uniform(-1, 1);
  auto r = quantize(z, s, rng);
  ASSERT_EQ(r.q.shape(), (Shape{3, 6}));
  ASSERT_EQ(r.hard_indices.size(), 6u);
  for (std::size_t t = 0; t < 3; ++t) {
    // rebuild q from the chosen entries by hand
    std::vector<double> picked;
    for (std::size_t g = 0; g < 2; ++g) {
      const std::size_t k = r.hard_indices[t * 2 + g];
      for (std::size_t e = 0; e < 3; ++e) picked.push_back(s.entries[(g * 4 + k) * 3 + e]);
    }
    for (std::size_t o = 0; o < 6; ++o) {
      double v = s.proj_out_b[o];
      for (std::size_t i = 0; i < 6; ++i) v += picked[i] * s.proj_out_w[i * 6 + o];
      EXPECT_NEAR(r.q[t * 6 + o], v, 1e-12);
    }
    // the pick is the argmax of the perturbed logits in each group
    for (std::size_t g = 0; g < 2; ++g) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < 4; ++k)
        if (r.perturbed_logits[t * 8 + g * 4 + k] > r.perturbed_logits[t * 8 + g * 4 + best]) best = k;
      EXPECT_EQ(r.hard_indices[t * 2 + g], best);
    }
  }
}

TEST(Quantizer, StraightThroughGivesProjInAGradient) {
  Rng rng(4);
  CodebookState<D> s({2, 4, 3, 5, 6}, rng);
  Tensor<D> z(Shape{4, 5});
  for (auto& v : z.values()) v = rng.uniform(-1, 1);
  Tape<D> tape;
  auto r = quantize(z, s, rng, Selection::Hard);
  tape.backward(sum(square(r.q)));
  ASSERT_TRUE(s.proj_in_w.has_grad());
  double norm = 0;
  for (auto g : s.proj_in_w.grad()) norm += g * g;
  EXPECT_GT(norm, 0.0);
}

TEST(Quantizer, GumbelSoftmaxWithZeroNoiseIsTemperedSoftmax) {
  Tensor<D> logits(Shape{1, 3}, {0.1, 0.7, -0.4});
  auto s = gumbel_softmax(logits, 0.5, std::vector<D>(3, 0.0));
  auto ref = softmax(scale(logits, 2.0));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s.soft[i], ref[i], 1e-12);
  EXPECT_EQ(s.index[0], 1u);
  EXPECT_EQ(s.one_hot.values(), (std::vector<D>{0, 1, 0}));
  EXPECT_THROW(gumbel_softmax(logits, 0.0, std::vector<D>(3, 0.0)), std::invalid_argument);
}

TEST(Quantizer, AverageProbsIsColumnMean) {
  Tensor<D> probs(Shape{2, 4}, {0.5, 0.5, 1, 0, 0.1, 0.9, 0, 1});
  auto p = average_probs(probs, 2, 2);
  EXPECT_EQ(p.shape(), (Shape{2, 2}));
  EXPECT_NEAR(p[0], 0.3, 1e-12);
  EXPECT_NEAR(p[1], 0.7, 1e-12);
  EXPECT_NEAR(p[2], 0.5, 1e-12);
}

TEST(Quantizer, PerplexityCountsUsedEntries) {
  EXPECT_DOUBLE_EQ(codebook_perplexity({0, 0, 0, 0}, 1, 4), 1.0);
  EXPECT_NEAR(codebook_perplexity({0, 1, 2, 3}, 1, 4), 4.0, 1e-12);
  EXPECT_NEAR(codebook_perplexity({0, 3, 1, 3}, 2, 4), (2.0 + 1.0) / 2.0, 1e-12);
}
