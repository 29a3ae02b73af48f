#pragma once

// Strided convolutional waveform encoder shared by the clean, noisy and
// enhanced branches, plus the feature-level consistency and penalty losses.

#include <stdexcept>
#include <string>
#include <vector>

#include "sslse/ops.hpp"
#include "sslse/params.hpp"

namespace sslse {

struct FeatureEncoderConfig {
  std::vector<std::size_t> strides = {5, 2, 2};
  std::vector<std::size_t> kernels = {10, 3, 3};
  std::size_t channels = 32;

  static FeatureEncoderConfig paper() { return {{5, 2, 2, 2, 2, 2, 2}, {10, 3, 3, 3, 3, 2, 2}, 512}; }
  static FeatureEncoderConfig toy() { return {}; }

  void validate() const {
    if (strides.empty() || strides.size() != kernels.size())
      throw std::invalid_argument("feature encoder: strides and kernels must be non-empty and of equal length");
    for (std::size_t i = 0; i < strides.size(); ++i)
      if (strides[i] == 0 || kernels[i] == 0) throw std::invalid_argument("feature encoder: zero stride or kernel");
    if (channels == 0) throw std::invalid_argument("feature encoder: channels must be positive");
  }

  /// Frame count for an input of `len` samples (0 if too short).
  std::size_t frames(std::size_t len) const {
    for (std::size_t i = 0; i < strides.size(); ++i) {
      len = conv_out_len(len, kernels[i], strides[i]);
      if (len == 0) return 0;
    }
    return len;
  }
  std::size_t frame_shift() const {
    std::size_t s = 1;
    for (auto v : strides) s *= v;
    return s;
  }
  /// Input samples seen by one output frame.
  std::size_t receptive_field() const {
    std::size_t rf = 1, jump = 1;
    for (std::size_t i = 0; i < strides.size(); ++i) {
      rf += (kernels[i] - 1) * jump;
      jump *= strides[i];
    }
    return rf;
  }
  std::size_t min_length() const { return receptive_field(); }
};

template <class T>
struct FeatureEncoderParams {
  FeatureEncoderConfig cfg;
  std::vector<Tensor<T>> weights;  // layer i: [C × C_in × K_i]
  std::vector<Tensor<T>> biases;
  Tensor<T> norm_gain, norm_bias;  // first-layer channel norm

  FeatureEncoderParams() = default;
  FeatureEncoderParams(const FeatureEncoderConfig& c, Rng& rng) : cfg(c) {
    cfg.validate();
    std::size_t cin = 1;
    for (std::size_t i = 0; i < cfg.kernels.size(); ++i) {
      const std::size_t fan = cin * cfg.kernels[i];
      weights.push_back(init_uniform<T>({cfg.channels, cin, cfg.kernels[i]}, fan, rng));
      biases.push_back(init_uniform<T>({cfg.channels}, fan, rng));
      cin = cfg.channels;
    }
    norm_gain = init_const<T>({cfg.channels}, T(1));
    norm_bias = init_const<T>({cfg.channels}, T(0));
  }

  ParamList<T> parameters() const {
    ParamList<T> out;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      out.push_back({"conv." + std::to_string(i) + ".weight", weights[i]});
      out.push_back({"conv." + std::to_string(i) + ".bias", biases[i]});
    }
    out.push_back({"norm.gain", norm_gain});
    out.push_back({"norm.bias", norm_bias});
    return out;
  }
};

/// Waveform [1×L] -> features [frames × channels].
template <class T>
Tensor<T> encode(const Tensor<T>& x, const FeatureEncoderParams<T>& p) {
  if (x.rank() != 2 || x.dim(0) != 1)
    throw DimensionError("encode: expected a [1 x L] waveform, got " + shape_str(x.shape()));
  if (p.cfg.frames(x.dim(1)) == 0)
    throw std::invalid_argument("encode: input of " + std::to_string(x.dim(1)) + " samples is too short; need at least " +
                                std::to_string(p.cfg.min_length()));
  Tensor<T> h = x;
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    h = conv1d(h, p.weights[i], p.biases[i], p.cfg.strides[i]);
    if (i == 0) h = channel_norm(h, p.norm_gain, p.norm_bias);
    h = gelu(h);
  }
  return transpose(h);
}

/// Mean over frames of ‖a_t − b_t‖₂.
template <class T>
Tensor<T> consistency_loss_c(const Tensor<T>& z_noisy, const Tensor<T>& z_clean) {
  if (z_noisy.shape() != z_clean.shape())
    throw DimensionError("consistency_loss_c: shapes " + shape_str(z_noisy.shape()) + " and " +
                         shape_str(z_clean.shape()) + " differ");
  return mean(l2_norm(sub(z_noisy, z_clean)));
}

template <class T>
Tensor<T> consistency_loss_cs(const Tensor<T>& z_noisy, const Tensor<T>& z_en, const Tensor<T>& z_clean) {
  return add(consistency_loss_c(z_noisy, z_clean), consistency_loss_c(z_en, z_clean));
}

/// Mean squared feature value.
template <class T>
Tensor<T> feature_penalty_f(const Tensor<T>& z) {
  return mean(square(z));
}

}  // namespace sslse
