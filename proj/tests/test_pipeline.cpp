#include <gtest/gtest.h>

#include <set>

#include "sslse/pipeline.hpp"

using namespace sslse;

namespace {

const BranchVariant kAllBranches[] = {BranchVariant::EW2, BranchVariant::SEW2, BranchVariant::EW2_SEW2,
                                      BranchVariant::EW2_SEW2_CONCAT};

std::vector<Example> toy_examples(std::size_t n, std::uint64_t seed, std::size_t min_chars = 4,
                                  std::size_t max_chars = 6) {
  CorpusConfig cc;
  cc.min_chars = min_chars;
  cc.max_chars = max_chars;
  cc.seed = seed;
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto g = generate_row(cc, i);
    out.push_back({g.row.id, g.row.transcript, g.clean, g.noisy, g.row.snr_db});
  }
  return out;
}

Model<float> model_for(BranchVariant v, std::uint64_t seed = 1) {
  RunConfig rc;
  rc.set("branch", to_string(v));
  return Model<float>(ModelConfig::from(rc), seed);
}

std::string group_of(const std::string& name) { return name.substr(0, name.find('.')); }

}  // namespace

TEST(Pipeline, Ew2NeverCallsTheEnhancer) {
  auto model = model_for(BranchVariant::EW2);
  EXPECT_FALSE(model.enhancer.has_value());
  auto data = toy_examples(2, 3);
  Adam<float> optim;
  pretrain_step(model, optim, data, 1);
  finetune_step(model, optim, data, 2);
  evaluate(model, data);
  validation_contrastive(model, data, 4);
  EXPECT_EQ(model.enhancer_calls->load(), 0u);
  EXPECT_THROW(model.run_enhancer(Tensor<float>::zeros({1, 100})), std::logic_error);

  auto joint = model_for(BranchVariant::EW2_SEW2);
  pretrain_step(joint, optim, data, 1);
  EXPECT_EQ(joint.enhancer_calls->load(), data.size());
}

TEST(Pipeline, ReportsCarryTheBranchTerms) {
  auto data = toy_examples(2, 5);
  {
    auto m = model_for(BranchVariant::EW2_SEW2);
    Adam<float> optim;
    auto r = pretrain_step(m, optim, data, 1);
    for (const char* k : {"L_ms", "L_d", "L_f", "L_cs", "L_SE", "total"}) EXPECT_TRUE(r.has(k)) << k;
    const auto& w = m.cfg.weights;
    EXPECT_NEAR(r.at("total"),
                r.at("L_ms") + w.alpha * r.at("L_d") + w.beta * r.at("L_f") + w.gamma * r.at("L_cs") +
                    w.xi * r.at("L_SE"),
                1e-4 * std::abs(r.at("total")));
  }
  {
    auto m = model_for(BranchVariant::EW2);
    Adam<float> optim;
    auto r = pretrain_step(m, optim, data, 1);
    for (const char* k : {"L_m", "L_d", "L_f", "L_c", "total"}) EXPECT_TRUE(r.has(k)) << k;
    EXPECT_FALSE(r.has("L_SE"));
  }
}

TEST(Pipeline, ZeroLearningRateLeavesParametersBitIdentical) {
  auto data = toy_examples(2, 6);
  for (auto v : kAllBranches) {
    auto m = model_for(v);
    const auto before = flatten(m.parameters());
    Adam<float> optim({0.0, 0});
    pretrain_step(m, optim, data, 1);
    finetune_step(m, optim, data, 1);
    EXPECT_EQ(flatten(m.parameters()), before) << to_string(v);
  }
}

TEST(Pipeline, GradientFlowMatrix) {
  auto data = toy_examples(2, 7);
  for (auto v : kAllBranches) {
    auto m = model_for(v);
    auto params = m.parameters();
    {
      Tape<float> tape;
      tape.backward(pretrain_loss(m, data, 3).loss.total);
    }
    std::map<std::string, double> norms;
    for (const auto& p : params) {
      double s = 0;
      if (p.tensor.has_grad())
        for (float g : p.tensor.grad()) s += double(g) * g;
      norms[group_of(p.name)] += s;
    }
    // the recognition head only enters at fine-tuning
    for (const auto& [group, n] : norms) {
      if (group == "head") EXPECT_EQ(n, 0.0) << to_string(v);
      else EXPECT_GT(n, 0.0) << to_string(v) << " group " << group;
    }
    EXPECT_EQ(norms.count("enhancer"), uses_enhancer(v) ? 1u : 0u) << to_string(v);
    EXPECT_EQ(norms.count("fusion"),
              v == BranchVariant::EW2_SEW2 || v == BranchVariant::EW2_SEW2_CONCAT ? 1u : 0u);
  }
}

TEST(Pipeline, FinetuneGradientsReachTheHead) {
  auto data = toy_examples(2, 8);
  auto m = model_for(BranchVariant::EW2);
  {
    Tape<float> tape;
    tape.backward(finetune_loss(m, std::span<const Example>(data), 1, true));
  }
  for (const auto& p : m.parameters())
    if (group_of(p.name) == "head" || group_of(p.name) == "transformer") EXPECT_TRUE(p.tensor.has_grad()) << p.name;
}

TEST(Pipeline, FrozenModelGivesRepeatableLosses) {
  auto data = toy_examples(3, 9);
  auto m = model_for(BranchVariant::EW2_SEW2);
  EXPECT_EQ(validation_contrastive(m, data, 5), validation_contrastive(m, data, 5));
  NoGradScope<float> off;
  const float a = finetune_loss(m, std::span<const Example>(data), 1, false).item();
  const float b = finetune_loss(m, std::span<const Example>(data), 1, false).item();
  const float c = finetune_loss(m, std::span<const Example>(data), 999, false).item();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);  // without augmentation the seed plays no role
  const float d = finetune_loss(m, std::span<const Example>(data), 1, true).item();
  EXPECT_NE(a, d);
}

TEST(Pipeline, SeededStepsAreReproducible) {
  auto data = toy_examples(2, 10);
  auto run = [&] {
    auto m = model_for(BranchVariant::EW2_SEW2, 4);
    Adam<float> optim;
    pretrain_step(m, optim, data, 11);
    finetune_step(m, optim, data, 12);
    return flatten(m.parameters());
  };
  EXPECT_EQ(run(), run());
}

TEST(Pipeline, StopGradTargetsBlocksQuantizerGradientFromContrastive) {
  auto data = toy_examples(2, 11);
  RunConfig rc;
  rc.set("branch", "EW2");
  rc.set("stop_grad_targets", "true");
  rc.set("alpha", "0");
  Model<float> m(ModelConfig::from(rc), 1);
  {
    Tape<float> tape;
    tape.backward(pretrain_loss(m, data, 3).loss.total);
  }
  for (const auto& p : m.parameters())
    if (p.name.rfind("quantizer.", 0) == 0) {
      double s = 0;
      if (p.tensor.has_grad())
        for (float g : p.tensor.grad()) s += double(g) * g;
      EXPECT_EQ(s, 0.0) << p.name;
    }
}

TEST(Evaluation, EmptySplitIsAnError) {
  auto m = model_for(BranchVariant::EW2);
  EXPECT_THROW(evaluate(m, std::vector<Example>{}), std::invalid_argument);
  Manifest empty;
  empty.split = "test";
  EXPECT_THROW(load_examples(empty), std::invalid_argument);
}

TEST(Evaluation, SnrBuckets) {
  EXPECT_EQ(snr_bucket(0.0), "0-5");
  EXPECT_EQ(snr_bucket(4.999), "0-5");
  EXPECT_EQ(snr_bucket(5.0), "5-10");
  EXPECT_EQ(snr_bucket(24.9), "20-25");
  EXPECT_EQ(snr_bucket(25.0), "20-25");
  EXPECT_EQ(snr_bucket(std::numeric_limits<double>::infinity()), "clean");
}

TEST(Evaluation, BucketsAggregateEditCounts) {
  auto data = toy_examples(8, 12);
  auto m = model_for(BranchVariant::EW2);
  auto r = evaluate(m, data, 2);
  ASSERT_EQ(r.rows.size(), data.size());
  std::map<std::string, std::pair<double, double>> edits;  // bucket -> (char edits, chars)
  for (const auto& u : r.rows) {
    EXPECT_DOUBLE_EQ(u.cer, cer(u.ref, u.hyp));
    for (const auto& b : {snr_bucket(u.snr_db), std::string("all")}) {
      edits[b].first += u.cer * u.ref.size();
      edits[b].second += u.ref.size();
    }
  }
  ASSERT_EQ(r.buckets.back().bucket, "all");
  EXPECT_EQ(r.buckets.back().utterances, data.size());
  for (const auto& b : r.buckets) EXPECT_NEAR(b.cer, edits[b.bucket].first / edits[b.bucket].second, 1e-12) << b.bucket;
  // same results for any worker count
  auto r1 = evaluate(m, data, 1);
  for (std::size_t i = 0; i < r.rows.size(); ++i) EXPECT_EQ(r.rows[i].hyp, r1.rows[i].hyp);
}

TEST(Training, BatchScheduleVisitsEveryExampleOncePerEpoch) {
  BatchSchedule s(10, 4, 3);
  EXPECT_EQ(s.steps_per_epoch(), 3u);
  for (std::size_t epoch = 0; epoch < 2; ++epoch) {
    std::multiset<std::size_t> seen;
    for (std::size_t k = 0; k < 3; ++k)
      for (auto i : s.batch(epoch * 3 + k)) seen.insert(i);
    EXPECT_EQ(seen.size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(seen.count(i), 1u);
  }
  EXPECT_THROW(BatchSchedule(0, 4, 1), std::invalid_argument);
}

TEST(Training, EveryBranchPretrainsAndFinetunes) {
  auto data = toy_examples(4, 13);
  for (auto v : kAllBranches) {
    auto m = model_for(v);
    Adam<float> optim;
    TrainOptions opt;
    opt.steps = 3;
    opt.eval_every = 3;
    auto h = run_pretrain(m, optim, data, data, opt);
    ASSERT_EQ(h.steps.size(), 3u);
    ASSERT_EQ(h.validation.size(), 1u);
    EXPECT_TRUE(std::isfinite(h.validation[0].contrastive));
    Adam<float> ft;
    auto log = run_finetune(m, ft, data, opt);
    ASSERT_EQ(log.size(), 3u);
    EXPECT_TRUE(std::isfinite(log.back().total)) << to_string(v);
  }
}
