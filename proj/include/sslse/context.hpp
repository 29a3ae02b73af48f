#pragma once

// Span masking, the pre-norm Transformer context network, the contrastive
// objective over quantized clean targets, and pre-training loss assembly.

#include <atomic>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sslse/fusion.hpp"
#include "sslse/ops.hpp"
#include "sslse/params.hpp"
#include "sslse/report.hpp"

namespace sslse {

// ------------------------------------------------------------------- masking

struct MaskConfig {
  double p = 0.065;
  std::size_t span = 10;

  void validate() const {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("mask: p must be in [0, 1]");
    if (span < 1) throw std::invalid_argument("mask: span must be >= 1");
  }
};

/// Every index starts a span with probability p; spans may overlap and are
/// clipped at the end.
inline std::vector<bool> sample_span_mask(std::size_t length, const MaskConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<bool> mask(length, false);
  for (std::size_t t = 0; t < length; ++t)
    if (rng.bernoulli(cfg.p))
      for (std::size_t k = t; k < std::min(length, t + cfg.span); ++k) mask[k] = true;
  return mask;
}

template <class T>
struct MaskedFeatures {
  Tensor<T> z;
  std::vector<bool> mask;
};

/// Replaces masked frames of z [T×d] by `embedding` [d].
template <class T>
MaskedFeatures<T> apply_mask(const Tensor<T>& z, const MaskConfig& cfg, const Tensor<T>& embedding, Rng& rng) {
  if (z.rank() != 2 || z.dim(0) == 0) throw DimensionError("apply_mask: expected non-empty [T x d] features");
  auto mask = sample_span_mask(z.dim(0), cfg, rng);
  return {replace_rows(z, mask, embedding), std::move(mask)};
}

/// Zeroes feature columns selected by span masking along the channel axis.
template <class T>
Tensor<T> mask_channels(const Tensor<T>& z, const MaskConfig& cfg, Rng& rng) {
  auto cols = sample_span_mask(z.dim(1), cfg, rng);
  std::vector<T> keep(z.size());
  for (std::size_t i = 0; i < z.dim(0); ++i)
    for (std::size_t j = 0; j < z.dim(1); ++j) keep[i * z.dim(1) + j] = cols[j] ? T(0) : T(1);
  return mul_const(z, keep);
}

// --------------------------------------------------------------- transformer

struct TransformerConfig {
  std::size_t layers = 2;
  std::size_t dim = 32;
  std::size_t heads = 4;
  std::size_t ffn = 64;
  std::size_t max_positions = 1024;

  static TransformerConfig paper() { return {12, 512, 8, 2048, 1024}; }
  static TransformerConfig toy() { return {}; }

  void validate() const {
    if (layers == 0 || dim == 0 || heads == 0 || ffn == 0 || max_positions == 0)
      throw std::invalid_argument("transformer: sizes must be positive");
    if (dim % heads != 0) throw std::invalid_argument("transformer: dim must be divisible by heads");
  }
};

template <class T>
struct TransformerLayer {
  Tensor<T> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  MultiheadParams<T> attention;
  LinearParams<T> ff_in, ff_out;
};

template <class T>
struct TransformerParams {
  TransformerConfig cfg;
  Tensor<T> positions;  // [max_positions × dim]
  std::vector<TransformerLayer<T>> layers;

  TransformerParams() = default;
  TransformerParams(const TransformerConfig& c, Rng& rng) : cfg(c) {
    cfg.validate();
    positions = init_normal<T>({cfg.max_positions, cfg.dim}, 0.02, rng);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      TransformerLayer<T> L;
      L.ln1_gain = init_const<T>({cfg.dim}, T(1));
      L.ln1_bias = init_const<T>({cfg.dim}, T(0));
      L.ln2_gain = init_const<T>({cfg.dim}, T(1));
      L.ln2_bias = init_const<T>({cfg.dim}, T(0));
      L.attention = MultiheadParams<T>(cfg.dim, cfg.heads, rng);
      L.ff_in = LinearParams<T>(cfg.dim, cfg.ffn, rng);
      L.ff_out = LinearParams<T>(cfg.ffn, cfg.dim, rng);
      layers.push_back(std::move(L));
    }
  }

  ParamList<T> parameters() const {
    ParamList<T> out{{"positions", positions}};
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      const std::string p = "layer." + std::to_string(l) + ".";
      out.push_back({p + "ln1.gain", L.ln1_gain});
      out.push_back({p + "ln1.bias", L.ln1_bias});
      append(out, p + "attention.", L.attention.parameters());
      out.push_back({p + "ln2.gain", L.ln2_gain});
      out.push_back({p + "ln2.bias", L.ln2_bias});
      append(out, p + "ff_in.", L.ff_in.parameters());
      append(out, p + "ff_out.", L.ff_out.parameters());
    }
    return out;
  }
};

/// Pre-norm Transformer over z [T×d]. When `layer_outputs` is given, the
/// output of every layer is appended to it.
template <class T>
Tensor<T> contextualize(const Tensor<T>& z, const TransformerParams<T>& p,
                        std::vector<Tensor<T>>* layer_outputs = nullptr) {
  if (z.rank() != 2 || z.dim(1) != p.cfg.dim)
    throw DimensionError("contextualize: expected [T x " + std::to_string(p.cfg.dim) + "], got " +
                         shape_str(z.shape()));
  if (z.dim(0) > p.cfg.max_positions)
    throw DimensionError("contextualize: " + std::to_string(z.dim(0)) + " frames exceed the position table (" +
                         std::to_string(p.cfg.max_positions) + ")");
  auto x = add(z, slice_rows(p.positions, 0, z.dim(0)));
  for (const auto& L : p.layers) {
    auto h = layer_norm(x, L.ln1_gain, L.ln1_bias);
    x = add(x, multihead(h, h, h, L.attention));
    h = layer_norm(x, L.ln2_gain, L.ln2_bias);
    x = add(x, L.ff_out(gelu(L.ff_in(h))));
    if (layer_outputs) layer_outputs->push_back(x);
  }
  return x;
}

// --------------------------------------------------------------- contrastive

struct LossWeights {
  double alpha = 0.1;  // diversity
  double beta = 10.0;  // feature penalty
  double gamma = 1.0;  // consistency
  double xi = 0.1;     // enhancement
  double kappa = 0.1;  // contrastive temperature
  std::size_t distractors = 100;

  void validate() const {
    if (!(kappa > 0)) throw std::invalid_argument("loss weights: kappa must be positive");
    if (distractors < 1) throw std::invalid_argument("loss weights: need at least one distractor");
  }
};

/// Σ_rows −log softmax(sims/κ + penalty)[0] for sims [M×(K+1)] whose
/// column 0 holds the positive. `penalty` (optional, same size) is added to
/// the logits.
template <class T>
Tensor<T> contrastive_from_similarities(const Tensor<T>& sims, double kappa, std::vector<T> penalty = {}) {
  if (sims.rank() != 2 || sims.dim(1) < 2) throw DimensionError("contrastive: expected [M x (K+1)] similarities");
  auto logits = scale(sims, static_cast<T>(1.0 / kappa));
  if (!penalty.empty()) logits = add(logits, Tensor<T>(sims.shape(), std::move(penalty)));
  return scale(sum(slice_cols(log_softmax(logits), 0, 1)), T(-1));
}

inline std::atomic<bool> g_distractor_warning_shown{false};

template <class T>
struct ContrastiveSum {
  Tensor<T> total;  // sum of per-frame losses
  std::size_t frames = 0;
};

/// Per-frame −log softmax of the positive among {positive, distractors},
/// summed over masked frames. Distractors are drawn without replacement
/// from targets at other masked frames. With `exclude_identical`, a
/// distractor equal to the positive target is removed from the softmax.
template <class T>
ContrastiveSum<T> contrastive_sum(const Tensor<T>& context, const Tensor<T>& targets, const std::vector<bool>& mask,
                                  const LossWeights& w, Rng& rng, bool exclude_identical = true) {
  w.validate();
  if (context.shape() != targets.shape())
    throw DimensionError("contrastive_loss: context " + shape_str(context.shape()) + " and targets " +
                         shape_str(targets.shape()) + " differ");
  if (mask.size() != context.dim(0)) throw DimensionError("contrastive_loss: mask length differs from frame count");
  std::vector<std::size_t> masked;
  for (std::size_t t = 0; t < mask.size(); ++t)
    if (mask[t]) masked.push_back(t);
  const std::size_t m = masked.size();
  if (m < 2) throw std::invalid_argument("contrastive_loss: need at least 2 masked frames, got " + std::to_string(m));
  std::size_t k = w.distractors;
  if (k > m - 1) {
    k = m - 1;
    if (!g_distractor_warning_shown.exchange(true))
      std::cerr << "warning: only " << m << " masked frames; using " << k << " distractors instead of "
                << w.distractors << "\n";
  }
  const std::size_t d = targets.dim(1);
  std::vector<std::size_t> ctx_rows, cand_rows;
  std::vector<T> penalty(m * (k + 1), T(0));
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t t = masked[i];
    auto picks = rng.sample_without_replacement(m - 1, k);
    ctx_rows.push_back(t);
    cand_rows.push_back(t);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t other = masked[picks[j] >= i ? picks[j] + 1 : picks[j]];
      ctx_rows.push_back(t);
      cand_rows.push_back(other);
      if (exclude_identical &&
          std::equal(targets.values().begin() + static_cast<std::ptrdiff_t>(t * d),
                     targets.values().begin() + static_cast<std::ptrdiff_t>((t + 1) * d),
                     targets.values().begin() + static_cast<std::ptrdiff_t>(other * d)))
        penalty[i * (k + 1) + j + 1] = T(-1e9);
    }
  }
  auto sims = cosine_similarity(gather_rows(context, ctx_rows), gather_rows(targets, cand_rows));
  return {contrastive_from_similarities(reshape(sims, Shape{m, k + 1}), w.kappa, std::move(penalty)), m};
}

/// Mean over masked frames of the contrastive loss.
template <class T>
Tensor<T> contrastive_loss(const Tensor<T>& context, const Tensor<T>& targets, const std::vector<bool>& mask,
                           const LossWeights& w, Rng& rng, bool exclude_identical = true) {
  auto s = contrastive_sum(context, targets, mask, w, rng, exclude_identical);
  return scale(s.total, T(1) / T(s.frames));
}

// ----------------------------------------------------------------- assembly

template <class T>
using LossComponents = std::map<std::string, Tensor<T>>;

template <class T>
struct TotalLoss {
  Tensor<T> total;
  LossReport report;
};

/// Names of the terms each branch variant needs, with their weights.
inline std::vector<std::pair<std::string, double>> loss_terms(BranchVariant v, const LossWeights& w) {
  if (v == BranchVariant::EW2) return {{"L_m", 1.0}, {"L_d", w.alpha}, {"L_f", w.beta}, {"L_c", w.gamma}};
  return {{"L_ms", 1.0}, {"L_d", w.alpha}, {"L_f", w.beta}, {"L_cs", w.gamma}, {"L_SE", w.xi}};
}

/// EW2: L_m + αL_d + βL_f + γL_c.
/// Enhancer variants: L_ms + αL_d + βL_f + γL_cs + ξL_SE.
template <class T>
TotalLoss<T> total_pretrain_loss(const LossComponents<T>& parts, const LossWeights& w, BranchVariant v) {
  TotalLoss<T> out;
  for (const auto& [name, weight] : loss_terms(v, w)) {
    auto it = parts.find(name);
    if (it == parts.end())
      throw std::invalid_argument("total_pretrain_loss: missing component " + name + " for branch " + to_string(v));
    auto term = scale(it->second, static_cast<T>(weight));
    out.total = out.total.defined() ? add(out.total, term) : term;
    out.report.terms[name] = static_cast<double>(it->second.item());
  }
  out.report.total = static_cast<double>(out.total.item());
  out.report.terms["total"] = out.report.total;
  return out;
}

}  // namespace sslse
