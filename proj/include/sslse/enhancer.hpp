#pragma once

// Time-domain U-Net enhancer: strided conv encoder, LSTM bottleneck,
// transposed-conv decoder with additive skip connections.

#include <stdexcept>
#include <string>
#include <vector>

#include "sslse/ops.hpp"
#include "sslse/params.hpp"
#include "sslse/report.hpp"
#include "sslse/signal.hpp"

namespace sslse {

struct EnhancerConfig {
  std::size_t depth = 3;
  std::size_t hidden = 8;  // channels after the first encoder layer
  std::size_t kernel = 8;
  std::size_t stride = 4;
  std::size_t lstm_layers = 2;

  static EnhancerConfig paper() { return {5, 64, 8, 4, 2}; }
  static EnhancerConfig toy() { return {}; }

  void validate() const {
    if (depth < 1) throw std::invalid_argument("enhancer: depth must be >= 1");
    if (hidden < 1 || stride < 1 || lstm_layers < 1) throw std::invalid_argument("enhancer: sizes must be positive");
    if (kernel < stride) throw std::invalid_argument("enhancer: kernel must be >= stride");
  }
  /// Output channels of encoder layer `i` (1-based); layer 0 is the waveform.
  std::size_t channels(std::size_t i) const { return i == 0 ? 1 : hidden << (i - 1); }

  /// Smallest length >= `len` for which every strided layer divides evenly.
  std::size_t valid_length(std::size_t len) const {
    std::size_t l = std::max<std::size_t>(len, 1);
    for (std::size_t i = 0; i < depth; ++i) {
      l = l <= kernel ? 1 : (l - kernel + stride - 1) / stride + 1;
    }
    for (std::size_t i = 0; i < depth; ++i) l = (l - 1) * stride + kernel;
    return l;
  }
};

template <class T>
struct EnhancerParams {
  struct EncoderLayer {
    Tensor<T> conv_w, conv_b;  // [C_i × C_{i-1} × K], [C_i]
    Tensor<T> gate_w, gate_b;  // [2C_i × C_i × 1], [2C_i]
  };
  struct DecoderLayer {
    Tensor<T> gate_w, gate_b;    // [2C_i × C_i × 1], [2C_i]
    Tensor<T> deconv_w, deconv_b;  // [C_i × C_{i-1} × K], [C_{i-1}]
  };

  EnhancerConfig cfg;
  std::vector<EncoderLayer> encoder;  // index 0 is layer 1
  std::vector<LstmLayerParams<T>> lstm;
  std::vector<DecoderLayer> decoder;  // index 0 mirrors encoder layer 1

  EnhancerParams() = default;
  EnhancerParams(const EnhancerConfig& c, Rng& rng) : cfg(c) {
    cfg.validate();
    const std::size_t k = cfg.kernel;
    for (std::size_t i = 1; i <= cfg.depth; ++i) {
      const std::size_t cin = cfg.channels(i - 1), ch = cfg.channels(i);
      encoder.push_back({init_uniform<T>({ch, cin, k}, cin * k, rng), init_uniform<T>({ch}, cin * k, rng),
                         init_uniform<T>({2 * ch, ch, 1}, ch, rng), init_uniform<T>({2 * ch}, ch, rng)});
      decoder.push_back({init_uniform<T>({2 * ch, ch, 1}, ch, rng), init_uniform<T>({2 * ch}, ch, rng),
                         init_uniform<T>({ch, cin, k}, ch * k, rng), init_uniform<T>({cin}, ch * k, rng)});
    }
    const std::size_t h = cfg.channels(cfg.depth);
    for (std::size_t l = 0; l < cfg.lstm_layers; ++l)
      lstm.push_back({init_uniform<T>({h, 4 * h}, h, rng), init_uniform<T>({h, 4 * h}, h, rng),
                      init_uniform<T>({4 * h}, h, rng)});
  }

  ParamList<T> parameters() const {
    ParamList<T> out;
    for (std::size_t i = 0; i < encoder.size(); ++i) {
      const std::string p = "encoder." + std::to_string(i + 1) + ".";
      out.push_back({p + "conv.weight", encoder[i].conv_w});
      out.push_back({p + "conv.bias", encoder[i].conv_b});
      out.push_back({p + "gate.weight", encoder[i].gate_w});
      out.push_back({p + "gate.bias", encoder[i].gate_b});
    }
    for (std::size_t l = 0; l < lstm.size(); ++l) {
      const std::string p = "lstm." + std::to_string(l) + ".";
      out.push_back({p + "w_input", lstm[l].w_input});
      out.push_back({p + "w_hidden", lstm[l].w_hidden});
      out.push_back({p + "bias", lstm[l].bias});
    }
    for (std::size_t i = 0; i < decoder.size(); ++i) {
      const std::string p = "decoder." + std::to_string(i + 1) + ".";
      out.push_back({p + "gate.weight", decoder[i].gate_w});
      out.push_back({p + "gate.bias", decoder[i].gate_b});
      out.push_back({p + "deconv.weight", decoder[i].deconv_w});
      out.push_back({p + "deconv.bias", decoder[i].deconv_b});
    }
    return out;
  }
};

/// x_noisy [1×L] -> x_en [1×L].
template <class T>
Tensor<T> enhance(const Tensor<T>& x_noisy, const EnhancerParams<T>& p) {
  const auto& cfg = p.cfg;
  if (x_noisy.rank() != 2 || x_noisy.dim(0) != 1)
    throw DimensionError("enhance: expected a [1 x L] waveform, got " + shape_str(x_noisy.shape()));
  const std::size_t len = x_noisy.dim(1);
  Tensor<T> x = resize_cols(x_noisy, cfg.valid_length(len));

  std::vector<Tensor<T>> skips;
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const auto& e = p.encoder[i];
    x = relu(conv1d(x, e.conv_w, e.conv_b, cfg.stride));
    x = glu(conv1d(x, e.gate_w, e.gate_b, 1), 0);
    if (x.dim(0) != cfg.channels(i + 1))
      throw std::logic_error("enhance: encoder layer " + std::to_string(i + 1) + " has " +
                             std::to_string(x.dim(0)) + " channels");
    skips.push_back(x);
  }
  x = transpose(lstm_forward(transpose(x), p.lstm));
  for (std::size_t i = cfg.depth; i-- > 0;) {
    const auto& d = p.decoder[i];
    x = add(x, skips[i]);
    x = glu(conv1d(x, d.gate_w, d.gate_b, 1), 0);
    x = transposed_conv1d(x, d.deconv_w, d.deconv_b, cfg.stride);
    if (i != 0) x = relu(x);
  }
  return resize_cols(x, len);
}

/// One SE-only step: L_SE of the enhanced noisy input against the clean
/// reference, gradients accumulated into the enhancer parameters.
template <class T>
LossReport enhancer_train_step(std::span<const float> clean, std::span<const float> noisy,
                               const EnhancerParams<T>& p, const MultiResConfig& stft) {
  if (clean.size() != noisy.size()) throw DimensionError("enhancer_train_step: clean/noisy lengths differ");
  Tape<T> tape;
  auto x = as_waveform_tensor<T>(clean);
  auto x_en = enhance(as_waveform_tensor<T>(noisy), p);
  auto loss = se_loss(x, x_en, stft);
  tape.backward(loss);
  LossReport r;
  r.terms["L_SE"] = static_cast<double>(loss.item());
  r.total = r.terms["L_SE"];
  return r;
}

}  // namespace sslse
