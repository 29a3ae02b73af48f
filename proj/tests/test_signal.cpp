#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>

#include "sslse/signal.hpp"
#include "sslse/wav.hpp"

using namespace sslse;
using D = double;

namespace {

std::vector<float> tone(std::size_t n, double freq, double rate, double amp = 0.3) {
  std::vector<float> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = snap_to_pcm(amp * std::sin(2 * M_PI * freq * i / rate + 0.3));
  return x;
}

std::vector<float> noise(std::size_t n, std::uint64_t seed, double amp = 0.2) {
  Rng rng(seed);
  std::vector<float> x(n);
  for (auto& v : x) v = snap_to_pcm(amp * rng.uniform(-1, 1));
  return x;
}

// Direct O(N²) windowed DFT magnitude, written independently of the tables.
double naive_bin(const std::vector<float>& x, std::size_t start, std::size_t win, std::size_t n_fft, std::size_t k) {
  std::complex<double> acc = 0;
  for (std::size_t n = 0; n < win; ++n) {
    const double w = 0.5 * (1 - std::cos(2 * M_PI * n / win));
    acc += w * x[start + n] * std::polar(1.0, -2 * M_PI * double(k) * double(n) / double(n_fft));
  }
  return std::abs(acc);
}

}  // namespace

TEST(Signal, StftMatchesNaiveDft) {
  auto x = noise(300, 3);
  StftConfig cfg{64, 16, 40};
  auto mag = stft_magnitude(as_waveform_tensor<D>(x), cfg);
  ASSERT_EQ(mag.dim(0), (300 - 40) / 16 + 1);
  ASSERT_EQ(mag.dim(1), 33u);
  for (std::size_t f = 0; f < mag.dim(0); f += 3)
    for (std::size_t k = 0; k < 33; ++k) EXPECT_NEAR(mag.at(f, k), naive_bin(x, f * 16, 40, 64, k), 1e-10);
  auto s = stft(x, cfg);
  EXPECT_NEAR(s.magnitude(2, 5), mag.at(2, 5), 1e-10);
}

TEST(Signal, StftRejectsShortSignal) {
  auto x = noise(10, 1);
  EXPECT_THROW(stft_magnitude(as_waveform_tensor<D>(x), StftConfig{64, 16, 40}), std::invalid_argument);
}

TEST(Signal, SpectralConvergenceClosedForms) {
  auto x = as_waveform_tensor<D>(tone(400, 440, 8000));
  auto zero = Tensor<D>::zeros(x.shape());
  auto doubled = scale(x, 2.0);
  for (const auto& r : MultiResConfig::toy().resolutions) {
    EXPECT_NEAR(spectral_convergence_loss(x, x, r).item(), 0.0, 1e-6);
    EXPECT_NEAR(spectral_convergence_loss(x, zero, r).item(), 1.0, 1e-6);
    EXPECT_NEAR(spectral_convergence_loss(x, doubled, r).item(), 1.0, 1e-6);
  }
}

TEST(Signal, SpectralConvergenceRejectsSilentReference) {
  auto z = Tensor<D>::zeros({1, 200});
  EXPECT_THROW(spectral_convergence_loss(z, z, StftConfig{64, 8, 32}), std::domain_error);
}

TEST(Signal, LogMagnitudeLossOfScaledCopy) {
  // |log|X| − log|cX|| = ln c wherever neither magnitude hits the floor
  auto x = as_waveform_tensor<D>(noise(300, 9, 0.5));
  auto y = scale(x, 3.0);
  EXPECT_NEAR(log_magnitude_loss(x, y, StftConfig{64, 8, 32}).item(), std::log(3.0), 1e-6);
  EXPECT_NEAR(log_magnitude_loss(x, x, StftConfig{64, 8, 32}).item(), 0.0, 1e-12);
}

TEST(Signal, SeLossIsZeroForPerfectEnhancement) {
  auto x = as_waveform_tensor<D>(noise(400, 4));
  EXPECT_NEAR(se_loss(x, x, MultiResConfig::toy()).item(), 0.0, 1e-12);
  auto y = as_waveform_tensor<D>(noise(400, 5));
  EXPECT_GT(se_loss(x, y, MultiResConfig::toy()).item(), 0.0);
  EXPECT_THROW(se_loss(x, as_waveform_tensor<D>(noise(300, 5)), MultiResConfig::toy()), std::invalid_argument);
}

TEST(Signal, MixAtSnrHitsTargetAndIsExact) {
  auto clean = tone(4000, 300, 8000);
  auto n = noise(6000, 7, 0.5);
  for (double snr : {0.0, 7.5, 25.0}) {
    Rng rng(11);
    auto mix = mix_at_snr(clean, n, snr, rng);
    EXPECT_NEAR(measure_snr_db(clean, mix.scaled_noise), snr, 1e-3);
    for (std::size_t i = 0; i < clean.size(); ++i) ASSERT_EQ(mix.noisy[i] - mix.scaled_noise[i], clean[i]);
  }
}

TEST(Signal, MixAtSnrRejectsShortNoise) {
  Rng rng(1);
  EXPECT_THROW(mix_at_snr(tone(100, 300, 8000), noise(50, 1), 5.0, rng), std::invalid_argument);
}

TEST(Wav, RoundTripIsBitExact) {
  auto dir = std::filesystem::temp_directory_path() / "sslse_wav_test";
  std::filesystem::create_directories(dir);
  WavData w{8000, noise(1234, 42, 0.9)};
  w.samples.push_back(-1.0f);
  w.samples.push_back(static_cast<float>(32767.0 / 32768.0));
  write_wav(dir / "a.wav", w);
  auto r = read_wav(dir / "a.wav");
  EXPECT_EQ(r.sample_rate, 8000u);
  ASSERT_EQ(r.samples.size(), w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) ASSERT_EQ(r.samples[i], w.samples[i]) << i;
  write_wav(dir / "b.wav", r);
  std::ifstream a(dir / "a.wav", std::ios::binary), b(dir / "b.wav", std::ios::binary);
  std::string sa{std::istreambuf_iterator<char>(a), {}}, sb{std::istreambuf_iterator<char>(b), {}};
  EXPECT_EQ(sa, sb);
  // RIFF header fields for 16-bit mono PCM
  EXPECT_EQ(sa.substr(0, 4), "RIFF");
  EXPECT_EQ(sa.substr(8, 4), "WAVE");
  EXPECT_EQ(static_cast<unsigned char>(sa[22]), 1);   // channels
  EXPECT_EQ(static_cast<unsigned char>(sa[34]), 16);  // bits per sample
}

TEST(Wav, RejectsGarbage) {
  std::vector<unsigned char> junk(64, 'x');
  EXPECT_THROW(decode_wav(junk), std::runtime_error);
}
