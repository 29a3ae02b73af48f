#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <set>

#include "sslse/checkpoint.hpp"
#include "sslse/corpus.hpp"

using namespace sslse;
namespace fs = std::filesystem;

namespace {

// Magnitude of every DFT bin up to Nyquist, computed directly.
std::vector<double> dft_magnitudes(std::span<const float> x) {
  const std::size_t n = x.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += double(x[i]) * std::polar(1.0, -2 * M_PI * double(k * i) / double(n));
    out[k] = std::abs(acc);
  }
  return out;
}

std::size_t argmax(const std::vector<double>& v, std::size_t from = 1) {
  std::size_t best = from;
  for (std::size_t i = from; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("sslse_corpus_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) { return read_file(p); }

}  // namespace

TEST(Corpus, DistinctCharactersHaveDistinctDominantBins) {
  for (const auto& alphabet : {Alphabet::toy(), Alphabet::paper()}) {
    ClipConfig cfg;
    cfg.alphabet = alphabet;
    cfg.ramp_ms = 0;
    std::set<std::size_t> seen;
    for (char c : alphabet.symbols) {
      auto w = gen_clean(std::string(1, c), 5, cfg);
      const std::size_t bin = argmax(dft_magnitudes(w));
      const double hz = static_cast<double>(bin) * cfg.sample_rate / static_cast<double>(w.size());
      EXPECT_NEAR(hz, cfg.chord(alphabet.index_of(c)).first, cfg.sample_rate / double(w.size()));
      EXPECT_TRUE(seen.insert(bin).second) << "symbol '" << c << "' shares bin " << bin;
    }
  }
}

TEST(Corpus, CleanSignalsLieOnThePcmGrid) {
  auto w = gen_clean("abc gfe", 3);
  for (float v : w) ASSERT_EQ(v, snap_to_pcm(v));
  EXPECT_EQ(w.size(), 7 * ClipConfig{}.segment_samples());
}

TEST(Corpus, UnknownCharacterErrorListsIt) {
  try {
    gen_clean("abxz", 1);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('x'), std::string::npos) << msg;
    EXPECT_NE(msg.find('z'), std::string::npos) << msg;
  }
}

TEST(Corpus, NoiseKindsHaveUnitRms) {
  for (auto kind : {NoiseKind::White, NoiseKind::Filtered, NoiseKind::Hum}) {
    auto n = gen_noise(kind, 16000, 77);
    double p = 0;
    for (float v : n) p += double(v) * v;
    EXPECT_NEAR(std::sqrt(p / n.size()), 1.0, 1e-3) << to_string(kind);
  }
}

TEST(Corpus, WhiteNoiseIsRoughlyFlat) {
  auto n = gen_noise(NoiseKind::White, 4096, 3);
  auto mag = dft_magnitudes(n);
  double low = 0, high = 0;
  for (std::size_t k = 1; k < 1024; ++k) low += mag[k] * mag[k];
  for (std::size_t k = 1024; k < 2047; ++k) high += mag[k] * mag[k];
  EXPECT_NEAR(low / high, 1.0, 0.2);
}

TEST(Corpus, HumPeaksAtMainsFrequency) {
  for (std::uint32_t rate : {8000u, 16000u}) {
    const std::size_t len = rate;  // one second: bin k is k Hz
    auto n = gen_noise(NoiseKind::Hum, len, 9, rate);
    auto mag = dft_magnitudes(n);
    EXPECT_EQ(argmax(mag), 50u) << rate;
  }
}

TEST(Corpus, MixedPairsRemeasureAtTheirSnr) {
  CorpusConfig cfg;
  cfg.min_chars = 5;
  cfg.max_chars = 12;
  for (std::size_t i = 0; i < 12; ++i) {
    auto g = generate_row(cfg, i);
    std::vector<float> noise(g.clean.size());
    for (std::size_t k = 0; k < noise.size(); ++k) noise[k] = g.noisy[k] - g.clean[k];
    EXPECT_NEAR(measure_snr_db(g.clean, noise), g.row.snr_db, 1e-3) << g.row.id;
    EXPECT_GE(g.row.snr_db, cfg.snr_min_db);
    EXPECT_LE(g.row.snr_db, cfg.snr_max_db);
  }
}

TEST(Corpus, TranscriptsAvoidEdgeAndDoubleSpaces) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    auto t = random_transcript(1 + i % 30, Alphabet::toy(), rng);
    EXPECT_EQ(t.size(), std::size_t(1 + i % 30));
    EXPECT_NE(t.front(), ' ');
    EXPECT_NE(t.back(), ' ');
    EXPECT_EQ(t.find("  "), std::string::npos);
  }
}

TEST(Corpus, SeededRegenerationIsByteIdentical) {
  CorpusConfig cfg;
  cfg.count = 6;
  cfg.min_chars = 3;
  cfg.max_chars = 8;
  cfg.seed = 31;
  auto a = scratch("a"), b = scratch("b");
  auto ma = build_corpus(cfg, a);
  cfg.workers = 3;
  build_corpus(cfg, b);
  EXPECT_EQ(slurp(a / "manifest.csv"), slurp(b / "manifest.csv"));
  for (const auto& u : ma.rows) {
    EXPECT_EQ(slurp(a / u.clean_path), slurp(b / u.clean_path)) << u.id;
    EXPECT_EQ(slurp(a / u.noisy_path), slurp(b / u.noisy_path)) << u.id;
  }
  cfg.seed = 32;
  auto c = scratch("c");
  build_corpus(cfg, c);
  EXPECT_NE(slurp(a / "manifest.csv"), slurp(c / "manifest.csv"));
}

TEST(Corpus, ManifestRoundTripsAndLoadsPairs) {
  CorpusConfig cfg;
  cfg.count = 3;
  cfg.min_chars = 2;
  cfg.max_chars = 4;
  auto dir = scratch("m");
  auto m = build_corpus(cfg, dir);
  auto r = read_manifest(dir / "manifest.csv");
  ASSERT_EQ(r.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.rows[i].id, m.rows[i].id);
    EXPECT_EQ(r.rows[i].transcript, m.rows[i].transcript);
    EXPECT_EQ(r.rows[i].snr_db, m.rows[i].snr_db);
    EXPECT_EQ(r.rows[i].seed, m.rows[i].seed);
    auto pair = load_pair(r, r.rows[i]);
    EXPECT_EQ(pair.clean, generate_row(cfg, i).clean);
  }
  std::ifstream f(dir / "manifest.csv");
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, "id,transcript,clean_path,noisy_path,snr_db,noise_kind,seed");
}

TEST(Corpus, CleanOnlySplitRecordsInfiniteSnr) {
  CorpusConfig cfg;
  cfg.count = 2;
  cfg.min_chars = 2;
  cfg.max_chars = 3;
  cfg.clean_only = true;
  auto dir = scratch("clean");
  build_corpus(cfg, dir);
  auto m = read_manifest(dir / "manifest.csv");
  for (const auto& u : m.rows) {
    EXPECT_TRUE(u.is_clean());
    EXPECT_EQ(u.noise_kind, "none");
    auto p = load_pair(m, u);
    EXPECT_EQ(p.clean, p.noisy);
  }
}

TEST(Corpus, MalformedManifestIsRejected) {
  auto dir = scratch("bad");
  {
    std::ofstream f(dir / "manifest.csv");
    f << "id,transcript\nx,y\n";
  }
  EXPECT_THROW(read_manifest(dir / "manifest.csv"), std::runtime_error);
}
