#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sslse/cli.hpp"

using namespace sslse;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ssl-se-lab");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / "sslse_cli_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::string synth(const fs::path& dir, const std::string& split, int count, const std::string& seed) {
  auto r = cli({"--seed", seed, "synth-data", "--out", dir.string(), "--split", split, "--count",
                std::to_string(count), "--min-chars", "3", "--max-chars", "5"});
  EXPECT_EQ(r.code, 0) << r.err;
  return (dir / "manifest.csv").string();
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_EQ(cli({"pretrain", "--help"}).code, 0);
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"synth-data"}).code, 1);  // --out is required
  EXPECT_EQ(cli({"synth-data", "--out", "x", "--split", "train"}).code, 1);
  EXPECT_EQ(cli({"eval", "--checkpoint", "a"}).code, 1);
}

TEST(Cli, GradcheckExitsZero) {
  auto r = cli({"gradcheck"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos) << r.out;
}

TEST(Cli, MissingConfigIsARuntimeFailureNamingThePath) {
  auto r = cli({"pretrain", "--config", "missing.cfg"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("missing.cfg"), std::string::npos) << r.err;
}

TEST(Cli, BadConfigValuesAreRuntimeFailures) {
  const auto dir = fresh_dir("badcfg");
  std::ofstream(dir / "x.cfg") << "no_such_key=1\n";
  auto r = cli({"pretrain", "--config", (dir / "x.cfg").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("no_such_key"), std::string::npos);
  EXPECT_EQ(cli({"pretrain", "--set", "branch=EW9", "--train", "m.csv"}).code, 2);
  EXPECT_EQ(cli({"eval", "--checkpoint", "none.ckpt", "--manifest", "m.csv", "--out", "o.csv"}).code, 2);
}

TEST(Cli, SynthDataIsSeedReproducible) {
  const auto a = fresh_dir("synth_a"), b = fresh_dir("synth_b");
  const auto ma = synth(a, "test", 4, "5"), mb = synth(b, "test", 4, "5");
  auto ra = read_manifest(ma), rb = read_manifest(mb);
  ASSERT_EQ(ra.rows.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(slurp(a / ra.rows[i].noisy_path), slurp(b / rb.rows[i].noisy_path));
    EXPECT_EQ(ra.rows[i].transcript, rb.rows[i].transcript);
  }
}

TEST(Cli, EndToEndProducesMetrics) {
  const auto root = fresh_dir("e2e");
  const auto pre = synth(root / "pre", "pretrain", 8, "1");
  const auto ft = synth(root / "ft", "finetune", 6, "2");
  const auto test = synth(root / "test", "test", 4, "3");

  auto p = cli({"--seed", "1", "pretrain", "--set", "branch=EW2_SEW2", "--train", pre, "--valid", test, "--steps",
                "200", "--out", (root / "run_pre").string()});
  ASSERT_EQ(p.code, 0) << p.err;
  for (const char* f : {"model.ckpt", "train_log.csv", "validation.csv", "config.cfg"})
    EXPECT_TRUE(fs::exists(root / "run_pre" / f)) << f;
  EXPECT_FALSE(track_validation_loss(root / "run_pre").empty());

  auto f = cli({"--seed", "1", "finetune", "--set", "branch=EW2_SEW2", "--train", ft, "--init",
                (root / "run_pre" / "model.ckpt").string(), "--steps", "500", "--out", (root / "run_ft").string()});
  ASSERT_EQ(f.code, 0) << f.err;

  const auto metrics = root / "metrics.csv", buckets = root / "buckets.csv";
  auto e = cli({"eval", "--checkpoint", (root / "run_ft" / "model.ckpt").string(), "--manifest", test, "--out",
                metrics.string(), "--buckets", buckets.string()});
  ASSERT_EQ(e.code, 0) << e.err;
  std::ifstream m(metrics);
  std::string line;
  std::getline(m, line);
  EXPECT_EQ(line, "utterance_id,snr_db,ref,hyp,cer,wer");
  std::size_t rows = 0;
  while (std::getline(m, line)) rows += !line.empty();
  EXPECT_EQ(rows, 4u);
  EXPECT_NE(e.out.find("all,4,"), std::string::npos) << e.out;

  // the fine-tuned model cannot be loaded as another branch
  auto mismatch = cli({"finetune", "--set", "branch=EW2", "--train", ft, "--init",
                       (root / "run_pre" / "model.ckpt").string(), "--steps", "1", "--out",
                       (root / "run_bad").string()});
  EXPECT_EQ(mismatch.code, 2);
  EXPECT_NE(mismatch.err.find("EW2_SEW2"), std::string::npos) << mismatch.err;

  // the remaining analysis commands run on these checkpoints
  auto ld = cli({"layerdist", "--checkpoint", (root / "run_ft" / "model.ckpt").string(), "--manifest", test, "--out",
                 (root / "layerdist.csv").string()});
  EXPECT_EQ(ld.code, 0) << ld.err;
  auto land = cli({"landscape", "--theta0", (root / "run_pre" / "model.ckpt").string(), "--theta1",
                   (root / "run_ft" / "model.ckpt").string(), "--theta2", (root / "run_pre" / "model.ckpt").string(),
                   "--manifest", test, "--out", (root / "land").string(), "--grid", "0:1:3", "--grid-m", "0:1:2",
                   "--grid-n", "0:1:2"});
  EXPECT_EQ(land.code, 0) << land.err;
  EXPECT_TRUE(fs::exists(root / "land" / "curve1d.csv"));
  EXPECT_TRUE(fs::exists(root / "land" / "surface2d.csv"));
  const auto wav = root / "test" / read_manifest(test).rows[0].noisy_path;
  auto enh = cli({"enhance", "--checkpoint", (root / "run_ft" / "model.ckpt").string(), "--in", wav.string(), "--out",
                  (root / "enhanced.wav").string()});
  EXPECT_EQ(enh.code, 0) << enh.err;
  EXPECT_EQ(read_wav(root / "enhanced.wav").samples.size(), read_wav(wav).samples.size());
}

TEST(Cli, IdenticalSeedsGiveByteIdenticalMetrics) {
  const auto root = fresh_dir("repeat");
  const auto data = synth(root / "data", "finetune", 4, "9");
  auto pipeline = [&](const std::string& tag, const std::string& seed) {
    const auto run = root / tag;
    EXPECT_EQ(cli({"--seed", seed, "pretrain", "--set", "branch=SEW2", "--train", data, "--steps", "4", "--out",
                   (run / "pre").string()})
                  .code,
              0);
    EXPECT_EQ(cli({"--seed", seed, "finetune", "--set", "branch=SEW2", "--train", data, "--init",
                   (run / "pre" / "model.ckpt").string(), "--steps", "6", "--out", (run / "ft").string()})
                  .code,
              0);
    EXPECT_EQ(cli({"--workers", "2", "eval", "--checkpoint", (run / "ft" / "model.ckpt").string(), "--manifest", data,
                   "--out", (run / "metrics.csv").string()})
                  .code,
              0);
    return std::make_pair(slurp(run / "metrics.csv"),
                          flatten(restore_model(load_checkpoint(run / "ft" / "model.ckpt")).parameters()));
  };
  const auto a = pipeline("a", "3"), b = pipeline("b", "3"), c = pipeline("c", "4");
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);  // checkpoints also record their own paths, so compare weights
  EXPECT_NE(a.second, c.second);
}

TEST(Cli, EnvironmentSeedIsUsedWithoutTheFlag) {
  const auto a = fresh_dir("env_a"), b = fresh_dir("env_b");
  ::setenv("SSL_SE_LAB_SEED", "77", 1);
  synth(a, "dev", 2, "77");
  auto r = cli({"synth-data", "--out", b.string(), "--split", "dev", "--count", "2", "--min-chars", "3",
                "--max-chars", "5"});
  ::unsetenv("SSL_SE_LAB_SEED");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(slurp(a / "manifest.csv"), slurp(b / "manifest.csv"));
}
