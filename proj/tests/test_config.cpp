#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "sslse/model.hpp"

using namespace sslse;
namespace fs = std::filesystem;

namespace {

fs::path write_cfg(const std::string& name, const std::string& text) {
  auto p = fs::temp_directory_path() / ("sslse_cfg_" + name);
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST(Config, DefaultsBuildTheToyModel) {
  RunConfig rc;
  auto m = ModelConfig::from(rc);
  EXPECT_EQ(m.branch, BranchVariant::EW2_SEW2);
  EXPECT_EQ(m.dim(), 32u);
  EXPECT_EQ(m.encoder.frame_shift(), 20u);
  EXPECT_DOUBLE_EQ(m.weights.alpha, 0.1);
  EXPECT_DOUBLE_EQ(m.weights.beta, 10.0);
  EXPECT_DOUBLE_EQ(m.weights.gamma, 1.0);
  EXPECT_DOUBLE_EQ(m.weights.xi, 0.1);
  EXPECT_DOUBLE_EQ(m.weights.kappa, 0.1);
  EXPECT_EQ(m.weights.distractors, 100u);
  EXPECT_DOUBLE_EQ(m.pretrain_mask.p, 0.065);
  EXPECT_EQ(m.pretrain_mask.span, 10u);
  EXPECT_EQ(m.finetune_channel_mask.span, 2u);  // ceil(32 / 16)
}

TEST(Config, FullScaleValuesDescribeTheLargeModel) {
  auto m = ModelConfig::from(RunConfig::full_scale());
  EXPECT_EQ(m.dim(), 512u);
  EXPECT_EQ(m.encoder.frames(16000), 49u);
  EXPECT_EQ(m.quantizer.entries, 320u);
  EXPECT_EQ(m.quantizer.entry_dim, 128u);
  EXPECT_EQ(m.transformer.layers, 12u);
  EXPECT_EQ(m.transformer.heads, 8u);
  EXPECT_EQ(m.transformer.ffn, 2048u);
  EXPECT_EQ(m.enhancer.depth, 5u);
  EXPECT_EQ(m.enhancer.hidden, 64u);
  EXPECT_EQ(m.vocabulary().size(), 30u);
  EXPECT_EQ(m.finetune_channel_mask.span, 32u);
}

TEST(Config, LoadsKeyValueFileWithComments) {
  auto p = write_cfg("ok.cfg", "# comment\nbranch = EW2\n\nsteps=7 # trailing\n");
  auto rc = RunConfig::load(p.string());
  EXPECT_EQ(rc.str("branch"), "EW2");
  EXPECT_EQ(rc.count("steps"), 7u);
  EXPECT_EQ(rc.str("lr"), "0.001");
}

TEST(Config, UnknownKeyIsRejectedWithLineNumber) {
  auto p = write_cfg("bad.cfg", "steps=3\nlearning_rate=0.1\n");
  try {
    RunConfig::load(p.string());
    FAIL();
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("learning_rate"), std::string::npos) << msg;
    EXPECT_NE(msg.find(":2:"), std::string::npos) << msg;
  }
}

TEST(Config, MissingFileNamesThePath) {
  try {
    RunConfig::load("/nonexistent/missing.cfg");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/missing.cfg"), std::string::npos);
  }
}

TEST(Config, TypedAccessorsValidate) {
  RunConfig rc;
  rc.set("steps", "abc");
  EXPECT_THROW(rc.count("steps"), std::invalid_argument);
  rc.set("steps", "-3");
  EXPECT_THROW(rc.count("steps"), std::invalid_argument);
  rc.set("stop_grad_targets", "maybe");
  EXPECT_THROW(rc.flag("stop_grad_targets"), std::invalid_argument);
  rc.set("encoder_strides", "5, 2,x");
  EXPECT_THROW(rc.list("encoder_strides"), std::invalid_argument);
  rc.set("branch", "EW3");
  EXPECT_THROW(ModelConfig::from(rc), std::invalid_argument);
}

TEST(Config, InconsistentWidthsAreRejected) {
  RunConfig rc;
  rc.set("tf_heads", "5");
  EXPECT_THROW(ModelConfig::from(rc), std::invalid_argument);
}

TEST(Config, DumpRoundTrips) {
  RunConfig rc;
  rc.set("branch", "SEW2");
  rc.set("kappa", "0.2");
  auto p = write_cfg("dump.cfg", rc.dump());
  EXPECT_EQ(RunConfig::load(p.string()).values(), rc.values());
}

TEST(Config, SeedPrecedenceFlagThenEnvironmentThenFallback) {
  ::unsetenv("SSL_SE_LAB_SEED");
  EXPECT_EQ(resolve_seed("", 9), 9u);
  ::setenv("SSL_SE_LAB_SEED", "21", 1);
  EXPECT_EQ(resolve_seed("", 9), 21u);
  EXPECT_EQ(resolve_seed("5", 9), 5u);
  ::setenv("SSL_SE_LAB_SEED", "x", 1);
  EXPECT_THROW(resolve_seed("", 9), std::invalid_argument);
  ::unsetenv("SSL_SE_LAB_SEED");
  EXPECT_THROW(resolve_seed("-1", 9), std::invalid_argument);
}
