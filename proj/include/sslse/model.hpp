#pragma once

// The full pre-training/fine-tuning network: shared feature encoder,
// optional enhancer and fusion, quantizer, Transformer, and CTC head.

#include <atomic>
#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "sslse/config.hpp"
#include "sslse/context.hpp"
#include "sslse/corpus.hpp"
#include "sslse/ctc.hpp"
#include "sslse/enhancer.hpp"
#include "sslse/feature_encoder.hpp"
#include "sslse/fusion.hpp"
#include "sslse/quantizer.hpp"
#include "sslse/report.hpp"
#include "sslse/signal.hpp"

namespace sslse {

struct ModelConfig {
  BranchVariant branch = BranchVariant::EW2_SEW2;
  std::uint32_t sample_rate = 8000;
  std::string alphabet = Alphabet::toy().symbols;
  bool unknown_token = false;
  FeatureEncoderConfig encoder;
  EnhancerConfig enhancer;
  QuantizerConfig quantizer;
  TransformerConfig transformer;
  std::size_t fusion_heads = 4;
  MaskConfig pretrain_mask;
  MaskConfig finetune_time_mask;
  MaskConfig finetune_channel_mask{0.05, 2};
  LossWeights weights;
  DiversitySign diversity = DiversitySign::Paper;
  MultiResConfig stft = MultiResConfig::toy();
  bool stop_grad_targets = false;
  bool detach_enhancer_features = false;
  bool exclude_identical_distractors = true;

  std::size_t dim() const { return transformer.dim; }
  Vocabulary vocabulary() const { return Vocabulary::from_alphabet(alphabet, unknown_token); }

  static ModelConfig from(const RunConfig& rc) {
    ModelConfig m;
    m.branch = parse_branch(rc.str("branch"));
    m.sample_rate = static_cast<std::uint32_t>(rc.count("sample_rate"));
    const auto& alpha = rc.str("alphabet");
    if (alpha == "toy") {
      m.alphabet = Alphabet::toy().symbols;
    } else if (alpha == "paper") {
      m.alphabet = Alphabet::paper().symbols;
      m.unknown_token = true;
    } else {
      throw std::invalid_argument("config key alphabet: expected toy or paper");
    }
    const std::size_t d = rc.count("dim");
    m.encoder = {rc.list("encoder_strides"), rc.list("encoder_kernels"), d};
    m.enhancer = {rc.count("enh_depth"), rc.count("enh_hidden"), rc.count("enh_kernel"), rc.count("enh_stride"),
                  rc.count("enh_lstm_layers")};
    m.quantizer = {rc.count("codebook_groups"), rc.count("codebook_entries"), rc.count("codebook_dim"), d, d,
                   rc.real("tau_max"), rc.real("tau_min"), rc.real("tau_decay")};
    m.transformer = {rc.count("tf_layers"), d, rc.count("tf_heads"), rc.count("tf_ffn"), 1024};
    m.fusion_heads = rc.count("fusion_heads");
    m.pretrain_mask = {rc.real("mask_prob"), rc.count("mask_span")};
    m.finetune_time_mask = {rc.real("ft_mask_prob"), rc.count("ft_mask_span")};
    std::size_t cspan = rc.count("ft_channel_span");
    if (cspan == 0) cspan = (d + 15) / 16;
    m.finetune_channel_mask = {rc.real("ft_channel_prob"), cspan};
    m.weights = {rc.real("alpha"), rc.real("beta"), rc.real("gamma"), rc.real("xi"), rc.real("kappa"),
                 rc.count("distractors")};
    m.diversity = parse_diversity_sign(rc.str("diversity_sign"));
    const auto& stft = rc.str("stft");
    if (stft == "toy") m.stft = MultiResConfig::toy();
    else if (stft == "paper") m.stft = MultiResConfig::paper();
    else throw std::invalid_argument("config key stft: expected toy or paper");
    m.stop_grad_targets = rc.flag("stop_grad_targets");
    m.detach_enhancer_features = rc.flag("detach_enhancer_features");
    m.exclude_identical_distractors = rc.flag("exclude_identical_distractors");
    m.validate();
    return m;
  }

  void validate() const {
    encoder.validate();
    if (uses_enhancer(branch)) enhancer.validate();
    quantizer.validate();
    transformer.validate();
    pretrain_mask.validate();
    finetune_time_mask.validate();
    finetune_channel_mask.validate();
    weights.validate();
    stft.validate();
    if (encoder.channels != transformer.dim || quantizer.output_dim != transformer.dim)
      throw std::invalid_argument("model: encoder, quantizer and Transformer widths must agree");
    if (transformer.dim % fusion_heads != 0) throw std::invalid_argument("model: dim not divisible by fusion_heads");
  }
};

template <class T>
class Model {
 public:
  ModelConfig cfg;
  FeatureEncoderParams<T> encoder;
  std::optional<EnhancerParams<T>> enhancer;
  std::optional<DualAttentionParams<T>> dual;
  std::optional<LinearParams<T>> concat_proj;
  CodebookState<T> quantizer;
  Tensor<T> feature_norm_gain, feature_norm_bias;  // [dim], shared by quantizer and Transformer inputs
  Tensor<T> mask_embedding;  // [dim]
  TransformerParams<T> transformer;
  LinearParams<T> head;      // dim -> |vocabulary|
  std::shared_ptr<std::atomic<std::size_t>> enhancer_calls = std::make_shared<std::atomic<std::size_t>>(0);

  Model(const ModelConfig& c, std::uint64_t seed) : cfg(c) {
    cfg.validate();
    Rng rng(derive_seed(seed, "init"));
    encoder = FeatureEncoderParams<T>(cfg.encoder, rng);
    if (uses_enhancer(cfg.branch)) enhancer.emplace(cfg.enhancer, rng);
    if (cfg.branch == BranchVariant::EW2_SEW2) dual.emplace(cfg.dim(), cfg.fusion_heads, rng);
    if (cfg.branch == BranchVariant::EW2_SEW2_CONCAT) concat_proj.emplace(2 * cfg.dim(), cfg.dim(), rng);
    quantizer = CodebookState<T>(cfg.quantizer, rng);
    feature_norm_gain = init_const<T>({cfg.dim()}, T(1));
    feature_norm_bias = init_const<T>({cfg.dim()}, T(0));
    mask_embedding = init_uniform<T>({cfg.dim()}, 1, rng);
    transformer = TransformerParams<T>(cfg.transformer, rng);
    head = LinearParams<T>(cfg.dim(), cfg.vocabulary().size(), rng);
  }

  /// Every trainable tensor, in a fixed order with stable names.
  ParamList<T> parameters() const {
    ParamList<T> out;
    append(out, "encoder.", encoder.parameters());
    if (enhancer) append(out, "enhancer.", enhancer->parameters());
    if (dual) append(out, "fusion.", dual->parameters());
    if (concat_proj) append(out, "fusion.concat.", concat_proj->parameters());
    out.push_back({"feature_norm.gain", feature_norm_gain});
    out.push_back({"feature_norm.bias", feature_norm_bias});
    append(out, "quantizer.", quantizer.parameters());
    out.push_back({"mask_embedding", mask_embedding});
    append(out, "transformer.", transformer.parameters());
    append(out, "head.", head.parameters());
    return out;
  }

  /// Deep copy in another scalar type (values, temperature and step).
  template <class U>
  Model<U> cast() const {
    Model<U> m(cfg, 0);
    copy_values(parameters(), m.parameters());
    m.quantizer.tau = quantizer.tau;
    m.quantizer.step = quantizer.step;
    return m;
  }
  Model clone() const { return cast<T>(); }

  Tensor<T> run_enhancer(const Tensor<T>& noisy) const {
    if (!enhancer) throw std::logic_error("branch " + to_string(cfg.branch) + " has no enhancer");
    ++*enhancer_calls;
    return enhance(noisy, *enhancer);
  }

  /// Features fed to the Transformer for this branch.
  Tensor<T> fuse(const Tensor<T>& z_noisy, const Tensor<T>& z_en) const {
    switch (cfg.branch) {
      case BranchVariant::EW2: return z_noisy;
      case BranchVariant::SEW2: return z_en;
      case BranchVariant::EW2_SEW2: return fuse_dual_attention(z_en, z_noisy, *dual);
      case BranchVariant::EW2_SEW2_CONCAT: return fuse_concat(z_en, z_noisy, *concat_proj);
    }
    throw std::logic_error("unknown branch");
  }

  struct BranchFeatures {
    Tensor<T> z_noisy, z_en, x_en, input;
  };

  /// Encodes a noisy waveform [1×L] through the branch's front end.
  /// `need_noisy` forces z_noisy even when the branch does not consume it.
  BranchFeatures front_end(const Tensor<T>& noisy, bool need_noisy = false) const {
    BranchFeatures f;
    if (uses_noisy(cfg.branch) || need_noisy) f.z_noisy = encode(noisy, encoder);
    if (uses_enhancer(cfg.branch)) {
      f.x_en = run_enhancer(noisy);
      f.z_en = encode(cfg.detach_enhancer_features ? f.x_en.detach() : f.x_en, encoder);
    }
    f.input = fuse(f.z_noisy, f.z_en);
    return f;
  }

  /// Layer norm applied to encoder-level features before quantization and
  /// before the Transformer; the feature penalty sees the raw features.
  Tensor<T> normalize_features(const Tensor<T>& z) const { return layer_norm(z, feature_norm_gain, feature_norm_bias); }

  /// Frame-level log-probabilities [T×|V|] from normalized branch features.
  Tensor<T> recognize(const Tensor<T>& normalized) const {
    return log_softmax(head(contextualize(normalized, transformer)));
  }
};

}  // namespace sslse
