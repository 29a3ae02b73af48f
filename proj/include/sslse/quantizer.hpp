#pragma once

// Product quantizer: G codebooks of V entries, Gumbel-softmax selection with
// straight-through hard one-hots, codebook diversity loss, and temperature
// annealing.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sslse/ops.hpp"
#include "sslse/params.hpp"

namespace sslse {

enum class DiversitySign {
  Paper,    // (1/GV)·Σ p̄ ln p̄; minimized at uniform usage
  Entropy,  // (GV − Σ_g exp(H_g)) / GV, the perplexity form of wav2vec 2.0
};

inline DiversitySign parse_diversity_sign(const std::string& s) {
  if (s == "paper") return DiversitySign::Paper;
  if (s == "entropy") return DiversitySign::Entropy;
  throw std::invalid_argument("unknown diversity_sign '" + s + "' (expected paper or entropy)");
}
inline std::string to_string(DiversitySign s) { return s == DiversitySign::Paper ? "paper" : "entropy"; }

struct QuantizerConfig {
  std::size_t groups = 2;
  std::size_t entries = 16;
  std::size_t entry_dim = 16;
  std::size_t input_dim = 32;
  std::size_t output_dim = 32;
  double tau_max = 2.0;
  double tau_min = 0.5;
  double tau_decay = 0.999995;

  static QuantizerConfig paper(std::size_t d_in = 512, std::size_t d_out = 512) {
    return {2, 320, 128, d_in, d_out};
  }
  static QuantizerConfig toy() { return {}; }

  void validate() const {
    if (groups == 0 || entries == 0 || entry_dim == 0 || input_dim == 0 || output_dim == 0)
      throw std::invalid_argument("quantizer: sizes must be positive");
    if (!(tau_min > 0) || tau_max < tau_min) throw std::invalid_argument("quantizer: need 0 < tau_min <= tau_max");
  }
  /// Temperature after `step` updates: max(tau_min, tau_max·decay^step).
  double temperature_at(std::uint64_t step) const {
    return std::max(tau_min, tau_max * std::pow(tau_decay, static_cast<double>(step)));
  }
};

template <class T>
struct CodebookState {
  QuantizerConfig cfg;
  Tensor<T> entries;      // [G × V × entry_dim]
  Tensor<T> proj_in_w;    // [input_dim × G·V]
  Tensor<T> proj_in_b;    // [G·V]
  Tensor<T> proj_out_w;   // [G·entry_dim × output_dim]
  Tensor<T> proj_out_b;   // [output_dim]
  double tau = 2.0;
  std::uint64_t step = 0;

  CodebookState() = default;
  CodebookState(const QuantizerConfig& c, Rng& rng) : cfg(c) {
    cfg.validate();
    const std::size_t gv = cfg.groups * cfg.entries, ge = cfg.groups * cfg.entry_dim;
    entries = init_uniform<T>({cfg.groups, cfg.entries, cfg.entry_dim}, 1, rng);
    // unit-variance logit weights: with layer-normed inputs the selection is
    // driven by the features rather than by the Gumbel noise from step one
    proj_in_w = init_normal<T>({cfg.input_dim, gv}, 1.0, rng);
    proj_in_b = init_const<T>({gv}, T(0));
    proj_out_w = init_uniform<T>({ge, cfg.output_dim}, ge, rng);
    proj_out_b = init_uniform<T>({cfg.output_dim}, ge, rng);
    tau = cfg.temperature_at(0);
  }

  ParamList<T> parameters() const {
    return {{"entries", entries},
            {"proj_in.weight", proj_in_w},
            {"proj_in.bias", proj_in_b},
            {"proj_out.weight", proj_out_w},
            {"proj_out.bias", proj_out_b}};
  }
};

/// Advances the update counter and returns the new temperature.
template <class T>
double anneal_temperature(CodebookState<T>& s) {
  ++s.step;
  s.tau = s.cfg.temperature_at(s.step);
  return s.tau;
}

template <class T>
struct GumbelSample {
  Tensor<T> one_hot;  // hard forward, soft backward
  Tensor<T> soft;     // softmax((logits + noise) / tau)
  std::vector<std::size_t> index;  // argmax per row
};

/// Row-wise Gumbel-softmax over logits [R×V] with caller-supplied noise.
template <class T>
GumbelSample<T> gumbel_softmax(const Tensor<T>& logits, double tau, const std::vector<T>& noise) {
  if (!(tau > 0)) throw std::invalid_argument("gumbel_softmax: tau must be positive");
  if (noise.size() != logits.size()) throw DimensionError("gumbel_softmax: noise size mismatch");
  Tensor<T> noise_t(logits.shape(), noise);
  GumbelSample<T> s;
  s.soft = softmax(scale(add(logits, noise_t), static_cast<T>(1.0 / tau)));
  const std::size_t v = logits.shape().back(), rows = logits.size() / v;
  std::vector<T> hard(logits.size(), T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = s.soft.data().subspan(r * v, v);
    const std::size_t k = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    hard[r * v + k] = T(1);
    s.index.push_back(k);
  }
  s.one_hot = straight_through(std::move(hard), s.soft);
  return s;
}

template <class T>
std::vector<T> gumbel_noise(std::size_t n, Rng& rng) {
  std::vector<T> g(n);
  for (auto& v : g) v = static_cast<T>(rng.gumbel());
  return g;
}

template <class T>
GumbelSample<T> gumbel_softmax(const Tensor<T>& logits, double tau, Rng& rng) {
  return gumbel_softmax(logits, tau, gumbel_noise<T>(logits.size(), rng));
}

enum class Selection { Hard, Soft };

template <class T>
struct QuantizeResult {
  Tensor<T> q;                 // [T × output_dim]
  Tensor<T> probs;             // [T × G·V], group g occupies columns [gV, (g+1)V)
  std::vector<std::size_t> hard_indices;  // [T × G] row-major
  Tensor<T> perturbed_logits;  // logits + Gumbel noise, [T × G·V]
};

/// Quantizes every frame of z [T×input_dim]. `noise` supplies Gumbel
/// samples of size T·G·V; use the Rng overload for fresh noise.
template <class T>
QuantizeResult<T> quantize(const Tensor<T>& z, const CodebookState<T>& s, const std::vector<T>& noise,
                           Selection mode = Selection::Hard) {
  const auto& c = s.cfg;
  if (z.rank() != 2 || z.dim(1) != c.input_dim)
    throw DimensionError("quantize: expected [T x " + std::to_string(c.input_dim) + "] features, got " +
                         shape_str(z.shape()));
  const std::size_t frames = z.dim(0), gv = c.groups * c.entries;
  if (noise.size() != frames * gv) throw DimensionError("quantize: noise size mismatch");
  auto logits = linear(z, s.proj_in_w, s.proj_in_b);
  auto book = reshape(s.entries, Shape{gv, c.entry_dim});

  QuantizeResult<T> r;
  r.hard_indices.assign(frames * c.groups, 0);
  std::vector<Tensor<T>> picked, probs;
  std::vector<T> perturbed(frames * gv);
  for (std::size_t g = 0; g < c.groups; ++g) {
    auto lg = slice_cols(logits, g * c.entries, c.entries);
    std::vector<T> ng(frames * c.entries);
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t v = 0; v < c.entries; ++v) {
        ng[t * c.entries + v] = noise[t * gv + g * c.entries + v];
        perturbed[t * gv + g * c.entries + v] = lg[t * c.entries + v] + ng[t * c.entries + v];
      }
    auto sample = gumbel_softmax(lg, s.tau, ng);
    for (std::size_t t = 0; t < frames; ++t) r.hard_indices[t * c.groups + g] = sample.index[t];
    const auto& select = mode == Selection::Hard ? sample.one_hot : sample.soft;
    picked.push_back(matmul(select, slice_rows(book, g * c.entries, c.entries)));
    probs.push_back(sample.soft);
  }
  r.q = linear(concat(picked, 1), s.proj_out_w, s.proj_out_b);
  r.probs = concat(probs, 1);
  r.perturbed_logits = Tensor<T>(Shape{frames, gv}, std::move(perturbed));
  return r;
}

template <class T>
QuantizeResult<T> quantize(const Tensor<T>& z, const CodebookState<T>& s, Rng& rng,
                           Selection mode = Selection::Hard) {
  return quantize(z, s, gumbel_noise<T>(z.dim(0) * s.cfg.groups * s.cfg.entries, rng), mode);
}

/// Batch-average of per-frame selection probabilities: stacked rows
/// [N × G·V] -> p̄ [G × V].
template <class T>
Tensor<T> average_probs(const Tensor<T>& probs, std::size_t groups, std::size_t entries) {
  if (probs.rank() != 2 || probs.dim(1) != groups * entries)
    throw DimensionError("average_probs: expected [N x " + std::to_string(groups * entries) + "], got " +
                         shape_str(probs.shape()));
  const std::size_t n = probs.dim(0);
  auto w = Tensor<T>::full(Shape{1, n}, T(1) / T(n));
  return reshape(matmul(w, probs), Shape{groups, entries});
}

/// Alternative averaging order: softmax of the batch-mean perturbed logits.
template <class T>
Tensor<T> probs_of_mean_logits(const Tensor<T>& perturbed_logits, double tau, std::size_t groups,
                               std::size_t entries) {
  auto m = average_probs(perturbed_logits, groups, entries);
  return softmax(scale(m, static_cast<T>(1.0 / tau)));
}

namespace detail {
template <class T>
Tensor<T> p_log_p(const Tensor<T>& p) {
  return unary(
      p, [](T v) { return v > T(0) ? v * std::log(v) : T(0); },
      [](T v, T) { return v > T(0) ? std::log(v) + T(1) : T(0); });
}
}  // namespace detail

/// Codebook diversity loss of p̄ [G×V]; 0·ln 0 is taken as 0.
template <class T>
Tensor<T> diversity_loss(const Tensor<T>& p_bar, DiversitySign sign = DiversitySign::Paper) {
  if (p_bar.rank() != 2) throw DimensionError("diversity_loss: expected [G x V], got " + shape_str(p_bar.shape()));
  const std::size_t g = p_bar.dim(0), v = p_bar.dim(1);
  for (T x : p_bar.values())
    if (!(x >= T(0) && x <= T(1))) throw std::domain_error("diversity_loss: probability outside [0, 1]");
  for (std::size_t i = 0; i < g; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < v; ++j) s += p_bar[i * v + j];
    if (std::abs(s - 1.0) > 1e-4) throw std::domain_error("diversity_loss: group " + std::to_string(i) + " sums to " +
                                                          std::to_string(s));
  }
  const T gv = static_cast<T>(g * v);
  auto plp = detail::p_log_p(p_bar);
  if (sign == DiversitySign::Paper) return scale(sum(plp), T(1) / gv);
  // exp(H_g) with H_g = −Σ_v p ln p
  auto neg_entropy = matmul(plp, Tensor<T>::full(Shape{v, 1}, T(1)));
  auto perplexity = sum(exp(scale(neg_entropy, T(-1))));
  return scale(add_scalar(scale(perplexity, T(-1)), gv), T(1) / gv);
}

/// Mean over groups of exp(entropy of hard-index usage).
inline double codebook_perplexity(const std::vector<std::size_t>& hard_indices, std::size_t groups,
                                  std::size_t entries) {
  if (groups == 0 || hard_indices.size() % groups != 0) throw std::invalid_argument("codebook_perplexity: bad layout");
  const std::size_t n = hard_indices.size() / groups;
  if (n == 0) return 0.0;
  double total = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    std::vector<double> counts(entries, 0.0);
    for (std::size_t t = 0; t < n; ++t) counts.at(hard_indices[t * groups + g]) += 1;
    double h = 0;
    for (double c : counts)
      if (c > 0) h -= (c / n) * std::log(c / n);
    total += std::exp(h);
  }
  return total / static_cast<double>(groups);
}

}  // namespace sslse
