#pragma once

// Flat key=value run configuration. Every key has a default (toy scale);
// full-scale values are listed alongside for reference. Unknown keys are
// rejected.

#include <cstdlib>
#include <fstream>
#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sslse {

struct ConfigKey {
  std::string name;
  std::string toy_default;
  std::string full_scale;  // value used at full scale, or "" when the same
  std::string help;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"mode", "pretrain", "", "pretrain | finetune"},
      {"branch", "EW2_SEW2", "", "EW2 | SEW2 | EW2_SEW2 | EW2_SEW2_CONCAT"},
      {"seed", "1", "", "master seed for every random stream"},
      {"sample_rate", "8000", "16000", "audio sample rate in Hz"},
      {"alphabet", "toy", "paper", "toy (7 letters + space) | paper (26 letters, space, apostrophe)"},
      {"dim", "32", "512", "feature, quantizer output and Transformer width"},
      {"encoder_strides", "5,2,2", "5,2,2,2,2,2,2", "feature encoder strides"},
      {"encoder_kernels", "10,3,3", "10,3,3,3,3,2,2", "feature encoder kernel sizes"},
      {"enh_depth", "3", "5", "enhancer encoder/decoder layers"},
      {"enh_hidden", "8", "64", "enhancer channels after the first layer"},
      {"enh_kernel", "8", "", "enhancer kernel size"},
      {"enh_stride", "4", "", "enhancer stride"},
      {"enh_lstm_layers", "2", "", "enhancer LSTM layers"},
      {"codebook_groups", "2", "", "quantizer groups G"},
      {"codebook_entries", "16", "320", "entries per group V"},
      {"codebook_dim", "16", "128", "codebook entry width"},
      {"tau_max", "2.0", "", "initial Gumbel temperature"},
      {"tau_min", "0.5", "", "temperature floor"},
      {"tau_decay", "0.999995", "", "per-update temperature decay"},
      {"tf_layers", "2", "12", "Transformer layers"},
      {"tf_heads", "4", "8", "Transformer attention heads"},
      {"tf_ffn", "64", "2048", "Transformer feed-forward width"},
      {"fusion_heads", "4", "8", "dual-attention fusion heads"},
      {"mask_prob", "0.065", "", "pre-training span start probability"},
      {"mask_span", "10", "", "pre-training span length in frames"},
      {"ft_mask_prob", "0.065", "", "fine-tuning time mask start probability"},
      {"ft_mask_span", "10", "", "fine-tuning time mask span"},
      {"ft_channel_prob", "0.05", "", "fine-tuning channel mask start probability"},
      {"ft_channel_span", "0", "32", "fine-tuning channel mask span (0: ceil(dim/16))"},
      {"alpha", "0.1", "", "diversity loss weight"},
      {"beta", "10", "", "feature penalty weight"},
      {"gamma", "1", "", "consistency loss weight"},
      {"xi", "0.1", "", "enhancement loss weight"},
      {"kappa", "0.1", "", "contrastive temperature"},
      {"distractors", "100", "", "contrastive distractors K"},
      {"diversity_sign", "paper", "", "paper | entropy"},
      {"stop_grad_targets", "false", "", "block gradients through quantized targets"},
      {"detach_enhancer_features", "false", "", "block contrastive gradients into the enhancer"},
      {"exclude_identical_distractors", "true", "", "drop distractors equal to the positive target"},
      {"freeze_encoder", "false", "", "keep the feature encoder fixed during fine-tuning"},
      {"stft", "toy", "paper", "multi-resolution STFT set: toy | paper"},
      {"lr", "0.001", "", "Adam learning rate"},
      {"warmup", "100", "", "linear warmup steps"},
      {"adam_beta1", "0.9", "", "Adam beta1"},
      {"adam_beta2", "0.98", "", "Adam beta2"},
      {"adam_eps", "1e-8", "", "Adam epsilon"},
      {"steps", "200", "", "optimizer updates"},
      {"batch_size", "4", "", "utterances per update"},
      {"eval_every", "0", "", "steps between validation passes (0: once per epoch)"},
      {"train_manifest", "", "", "training manifest CSV"},
      {"valid_manifest", "", "", "validation manifest CSV (optional)"},
      {"init_checkpoint", "", "", "checkpoint to start from (fine-tuning)"},
      {"out_dir", "run", "", "output directory"},
  };
  return keys;
}

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_keys()) values_[k.name] = k.toy_default;
  }

  /// Full-scale values for every key that has one.
  static RunConfig full_scale() {
    RunConfig c;
    for (const auto& k : config_keys())
      if (!k.full_scale.empty()) c.values_[k.name] = k.full_scale;
    return c;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file " + path);
    RunConfig c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
      try {
        c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
      } catch (const std::exception& e) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    return c;
  }

  void set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    it->second = value;
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    return it->second;
  }
  long long integer(const std::string& key) const {
    const auto& s = str(key);
    try {
      std::size_t pos = 0;
      long long v = std::stoll(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("config key " + key + ": '" + s + "' is not an integer");
    }
  }
  std::size_t count(const std::string& key) const {
    auto v = integer(key);
    if (v < 0) throw std::invalid_argument("config key " + key + " must be non-negative");
    return static_cast<std::size_t>(v);
  }
  std::uint64_t u64(const std::string& key) const {
    const auto& s = str(key);
    try {
      std::size_t pos = 0;
      auto v = std::stoull(s, &pos);
      if (pos != s.size() || s.find('-') != std::string::npos) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("config key " + key + ": '" + s + "' is not an unsigned integer");
    }
  }
  double real(const std::string& key) const {
    const auto& s = str(key);
    try {
      std::size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("config key " + key + ": '" + s + "' is not a number");
    }
  }
  bool flag(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw std::invalid_argument("config key " + key + ": '" + s + "' is not a boolean");
  }
  std::vector<std::size_t> list(const std::string& key) const {
    std::vector<std::size_t> out;
    std::stringstream ss(str(key));
    for (std::string item; std::getline(ss, item, ',');) {
      item = trim(item);
      try {
        std::size_t pos = 0;
        auto v = std::stoull(item, &pos);
        if (pos != item.size()) throw std::invalid_argument("");
        out.push_back(v);
      } catch (const std::exception&) {
        throw std::invalid_argument("config key " + key + ": bad list item '" + item + "'");
      }
    }
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  std::string dump() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

 private:
  std::map<std::string, std::string> values_;
};

/// Keys that describe a training run rather than the model architecture.
inline bool is_training_key(const std::string& key) {
  static const std::vector<std::string> keys = {
      "mode", "seed", "lr", "warmup", "adam_beta1", "adam_beta2", "adam_eps", "steps", "batch_size", "eval_every",
      "train_manifest", "valid_manifest", "init_checkpoint", "out_dir", "ft_mask_prob", "ft_mask_span",
      "ft_channel_prob", "ft_channel_span", "freeze_encoder"};
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

/// Seed from `--seed`, else SSL_SE_LAB_SEED, else `fallback`.
inline std::uint64_t resolve_seed(const std::string& flag_value, std::uint64_t fallback) {
  auto parse = [](const std::string& s, const char* what) {
    try {
      std::size_t pos = 0;
      auto v = std::stoull(s, &pos);
      if (pos != s.size() || s.find('-') != std::string::npos) throw std::invalid_argument("");
      return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string(what) + ": '" + s + "' is not an unsigned integer");
    }
  };
  if (!flag_value.empty()) return parse(flag_value, "--seed");
  if (const char* env = std::getenv("SSL_SE_LAB_SEED"); env && *env) return parse(env, "SSL_SE_LAB_SEED");
  return fallback;
}

}  // namespace sslse
