#pragma once

// STFT analysis, the enhancement loss family (waveform L1 plus
// multi-resolution spectral convergence and log-magnitude terms), and
// SNR-controlled additive mixing.

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "sslse/ops.hpp"
#include "sslse/rng.hpp"

namespace sslse {

using Waveform = std::vector<float>;

struct StftConfig {
  std::size_t n_fft = 512;
  std::size_t hop = 50;
  std::size_t win_length = 240;

  void validate() const {
    if (win_length == 0 || win_length > n_fft)
      throw std::invalid_argument("stft: win_length must be in [1, n_fft]");
    if (hop < 1) throw std::invalid_argument("stft: hop must be >= 1");
  }
  std::size_t bins() const { return n_fft / 2 + 1; }
  std::size_t frames(std::size_t len) const { return len < win_length ? 0 : (len - win_length) / hop + 1; }
};

struct MultiResConfig {
  std::vector<StftConfig> resolutions;

  /// Full-scale resolutions for 16 kHz audio.
  static MultiResConfig paper() { return {{{512, 50, 240}, {1024, 120, 600}, {2048, 240, 1200}}}; }
  /// Proportionally shrunk resolutions for short toy utterances.
  static MultiResConfig toy() { return {{{64, 8, 32}, {128, 16, 80}, {256, 32, 160}}}; }

  void validate() const {
    if (resolutions.empty()) throw std::invalid_argument("multi-resolution STFT needs at least one resolution");
    for (const auto& r : resolutions) r.validate();
  }
};

/// Precomputed Hann-windowed DFT basis for one resolution.
template <class T>
struct StftPlan {
  StftConfig cfg;
  std::vector<T> cos_table;  // [bins × win]
  std::vector<T> sin_table;  // [bins × win]

  explicit StftPlan(const StftConfig& c) : cfg(c) {
    cfg.validate();
    const std::size_t bins = cfg.bins(), win = cfg.win_length;
    cos_table.resize(bins * win);
    sin_table.resize(bins * win);
    for (std::size_t k = 0; k < bins; ++k)
      for (std::size_t n = 0; n < win; ++n) {
        // periodic Hann window
        const double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(n) / static_cast<double>(win));
        const double phase = 2.0 * M_PI * static_cast<double>((k * n) % cfg.n_fft) / static_cast<double>(cfg.n_fft);
        cos_table[k * win + n] = static_cast<T>(w * std::cos(phase));
        sin_table[k * win + n] = static_cast<T>(-w * std::sin(phase));
      }
  }

  static std::shared_ptr<const StftPlan> get(const StftConfig& c) {
    static std::mutex mu;
    static std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::shared_ptr<const StftPlan>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[{c.n_fft, c.hop, c.win_length}];
    if (!slot) slot = std::make_shared<const StftPlan>(c);
    return slot;
  }
};

/// One-sided complex spectrum, frames × bins, row-major.
struct Spectrum {
  std::size_t frames = 0, bins = 0;
  std::vector<double> re, im;

  double magnitude(std::size_t f, std::size_t k) const {
    return std::hypot(re[f * bins + k], im[f * bins + k]);
  }
};

/// Hann-windowed STFT without edge padding; frames = floor((len-win)/hop)+1.
inline Spectrum stft(std::span<const float> x, const StftConfig& cfg) {
  cfg.validate();
  if (x.size() < cfg.win_length)
    throw std::invalid_argument("stft: signal of " + std::to_string(x.size()) +
                                " samples is shorter than one window (" + std::to_string(cfg.win_length) + ")");
  auto plan = StftPlan<double>::get(cfg);
  Spectrum s;
  s.frames = cfg.frames(x.size());
  s.bins = cfg.bins();
  s.re.assign(s.frames * s.bins, 0.0);
  s.im.assign(s.frames * s.bins, 0.0);
  const std::size_t win = cfg.win_length;
  for (std::size_t f = 0; f < s.frames; ++f) {
    const float* frame = x.data() + f * cfg.hop;
    for (std::size_t k = 0; k < s.bins; ++k) {
      double re = 0, im = 0;
      for (std::size_t n = 0; n < win; ++n) {
        re += plan->cos_table[k * win + n] * frame[n];
        im += plan->sin_table[k * win + n] * frame[n];
      }
      s.re[f * s.bins + k] = re;
      s.im[f * s.bins + k] = im;
    }
  }
  return s;
}

/// Differentiable |STFT(x)| for a waveform tensor of shape [L] or [1×L].
template <class T>
Tensor<T> stft_magnitude(const Tensor<T>& x, const StftConfig& cfg) {
  cfg.validate();
  detail::require(x.rank() == 1 || (x.rank() == 2 && x.dim(0) == 1),
                  "stft_magnitude: expected a mono waveform, got " + shape_str(x.shape()));
  const std::size_t len = x.size();
  if (len < cfg.win_length)
    throw std::invalid_argument("stft: signal of " + std::to_string(len) + " samples is shorter than one window (" +
                                std::to_string(cfg.win_length) + ")");
  auto plan = StftPlan<T>::get(cfg);
  const std::size_t frames = cfg.frames(len), bins = cfg.bins(), win = cfg.win_length, hop = cfg.hop;
  std::vector<T> mag(frames * bins), re(frames * bins), im(frames * bins);
  const T* X = x.data().data();
  for (std::size_t f = 0; f < frames; ++f) {
    const T* frame = X + f * hop;
    for (std::size_t k = 0; k < bins; ++k) {
      const T* ct = plan->cos_table.data() + k * win;
      const T* st = plan->sin_table.data() + k * win;
      T r = 0, i = 0;
      for (std::size_t n = 0; n < win; ++n) {
        r += ct[n] * frame[n];
        i += st[n] * frame[n];
      }
      re[f * bins + k] = r;
      im[f * bins + k] = i;
      mag[f * bins + k] = std::sqrt(r * r + i * i);
    }
  }
  return detail::make_result<T>(
      Shape{frames, bins}, std::move(mag), {&x},
      [x, plan, re = std::move(re), im = std::move(im), frames, bins, win, hop](detail::Node<T>& o) {
        auto g = detail::sink(x);
        if (g.empty()) return;
        for (std::size_t f = 0; f < frames; ++f) {
          T* gframe = g.data() + f * hop;
          for (std::size_t k = 0; k < bins; ++k) {
            const std::size_t idx = f * bins + k;
            if (o.value[idx] == T(0) || o.grad[idx] == T(0)) continue;
            const T a = o.grad[idx] * re[idx] / o.value[idx];
            const T b = o.grad[idx] * im[idx] / o.value[idx];
            const T* ct = plan->cos_table.data() + k * win;
            const T* st = plan->sin_table.data() + k * win;
            for (std::size_t n = 0; n < win; ++n) gframe[n] += a * ct[n] + b * st[n];
          }
        }
      });
}

/// Square root with zero gradient at the origin.
template <class T>
Tensor<T> sqrt0(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::sqrt(v); }, [](T, T y) { return y > T(0) ? T(0.5) / y : T(0); });
}

template <class T>
Tensor<T> frobenius_norm(const Tensor<T>& x) {
  return sqrt0(sum(square(x)));
}

constexpr double kMagnitudeFloor = 1e-7;

template <class T>
Tensor<T> as_waveform_tensor(std::span<const float> x, bool requires_grad = false) {
  return Tensor<T>(Shape{1, x.size()}, std::vector<T>(x.begin(), x.end()), requires_grad);
}

namespace detail {
template <class T>
void require_same_length(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.size() == b.size(), std::string(op) + ": waveform lengths differ (" + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()) + ")");
}
}  // namespace detail

/// ‖|STFT(x)| − |STFT(x_en)|‖_F / ‖STFT(x)‖_F; x is the clean reference.
template <class T>
Tensor<T> spectral_convergence_loss(const Tensor<T>& x, const Tensor<T>& x_en, const StftConfig& cfg) {
  detail::require_same_length(x, x_en, "spectral_convergence_loss");
  auto mx = stft_magnitude(x, cfg);
  auto me = stft_magnitude(x_en, cfg);
  auto den = frobenius_norm(mx);
  if (den.item() == T(0)) throw std::domain_error("spectral_convergence_loss: reference spectrum is all zero");
  auto num = frobenius_norm(sub(mx, me));
  // den is a constant with respect to x_en but x may carry gradients too
  auto inv = detail::unary(den, [](T v) { return T(1) / v; }, [](T v, T) { return -T(1) / (v * v); });
  return mul(num, inv);
}

/// Mean absolute difference of natural-log magnitudes over all
/// time-frequency bins, magnitudes floored at 1e-7.
template <class T>
Tensor<T> log_magnitude_loss(const Tensor<T>& x, const Tensor<T>& x_en, const StftConfig& cfg) {
  detail::require_same_length(x, x_en, "log_magnitude_loss");
  const T floor = static_cast<T>(kMagnitudeFloor);
  auto lx = log_floor(stft_magnitude(x, cfg), floor);
  auto le = log_floor(stft_magnitude(x_en, cfg), floor);
  return mean(abs(sub(lx, le)));
}

/// (1/L)·(‖x − x_en‖₁ + Σ_resolutions (L_sc + L_mag)), L = waveform length.
template <class T>
Tensor<T> se_loss(const Tensor<T>& x, const Tensor<T>& x_en, const MultiResConfig& cfg) {
  detail::require_same_length(x, x_en, "se_loss");
  cfg.validate();
  auto total = sum(abs(sub(x, x_en)));
  for (const auto& r : cfg.resolutions)
    total = add(total, add(spectral_convergence_loss(x, x_en, r), log_magnitude_loss(x, x_en, r)));
  return scale(total, T(1) / T(x.size()));
}

// -------------------------------------------------------------------- mixing

inline double power(std::span<const float> x) {
  double s = 0;
  for (float v : x) s += static_cast<double>(v) * v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

inline double measure_snr_db(std::span<const float> clean, std::span<const float> noise) {
  return 10.0 * std::log10(power(clean) / power(noise));
}

/// Step of the 16-bit PCM grid; waveforms on this grid survive WAV round trips.
constexpr double kPcmStep = 1.0 / 32768.0;

inline float snap_to_pcm(double v) { return static_cast<float>(std::nearbyint(v / kPcmStep) * kPcmStep); }

struct MixResult {
  Waveform noisy;
  Waveform scaled_noise;  // g · noise_crop, as added
  double gain = 0.0;
  std::size_t offset = 0;
};

/// noisy = clean + g·noise[offset, offset+len), g = sqrt(P_clean / (P_noise·10^(snr/10))).
/// The scaled noise is snapped to the 16-bit PCM grid, so for grid-aligned
/// clean input the sum is exact and noisy − scaled_noise == clean bit for bit.
inline MixResult mix_at_snr(std::span<const float> clean, std::span<const float> noise, double snr_db, Rng& rng) {
  if (noise.size() < clean.size())
    throw std::invalid_argument("mix_at_snr: noise (" + std::to_string(noise.size()) +
                                " samples) shorter than clean (" + std::to_string(clean.size()) + ")");
  const double p_clean = power(clean);
  if (!(p_clean > 0)) throw std::invalid_argument("mix_at_snr: clean signal is silent");
  MixResult out;
  out.offset = rng.index(noise.size() - clean.size() + 1);
  auto crop = noise.subspan(out.offset, clean.size());
  const double p_noise = power(crop);
  if (!(p_noise > 0)) throw std::invalid_argument("mix_at_snr: noise segment is silent");
  out.gain = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  out.scaled_noise.resize(clean.size());
  out.noisy.resize(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    out.scaled_noise[i] = snap_to_pcm(out.gain * crop[i]);
    out.noisy[i] = clean[i] + out.scaled_noise[i];
  }
  return out;
}

}  // namespace sslse
