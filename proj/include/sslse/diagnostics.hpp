#pragma once

// Analysis instruments: loss landscapes along checkpoint-difference
// directions, clean/noisy layer distances, validation-loss series, and the
// finite-difference suite over every differentiable op and loss.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sslse/gradcheck.hpp"
#include "sslse/parallel.hpp"
#include "sslse/pipeline.hpp"

namespace sslse {

// ----------------------------------------------------------------- landscape

/// theta(m, n) = theta0 + m·delta1 + n·delta2, all in double.
struct LandscapeProbe {
  std::vector<double> theta0, delta1, delta2;

  LandscapeProbe(const std::vector<double>& t0, const std::vector<double>& t1, const std::vector<double>& t2)
      : theta0(t0), delta1(t1.size()), delta2(t2.size()) {
    if (t1.size() != t0.size() || t2.size() != t0.size())
      throw DimensionError("landscape: checkpoints have " + std::to_string(t0.size()) + ", " +
                           std::to_string(t1.size()) + " and " + std::to_string(t2.size()) + " parameters");
    for (std::size_t i = 0; i < t0.size(); ++i) {
      delta1[i] = t1[i] - t0[i];
      delta2[i] = t2[i] - t0[i];
    }
  }

  std::vector<double> at(double m, double n) const {
    std::vector<double> out(theta0.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = theta0[i] + m * delta1[i] + n * delta2[i];
    return out;
  }
};

using Objective = std::function<double(const std::vector<double>& theta)>;

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n == 0) throw std::invalid_argument("linspace: need at least one point");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (n - 1);
  return out;
}

struct CurvePoint {
  double m, loss;
};
struct SurfacePoint {
  double m, n, loss;
};

/// f(m) = J(theta0 + m·delta1). `J` must be safe to call concurrently.
inline std::vector<CurvePoint> loss_curve_1d(const LandscapeProbe& probe, const std::vector<double>& m_grid,
                                             const Objective& J, unsigned workers = 1) {
  if (m_grid.empty()) throw std::invalid_argument("loss_curve_1d: empty grid");
  std::vector<CurvePoint> out(m_grid.size());
  parallel_for(m_grid.size(), workers, [&](std::size_t i) { out[i] = {m_grid[i], J(probe.at(m_grid[i], 0.0))}; });
  return out;
}

/// f(m, n) = J(theta0 + m·delta1 + n·delta2), row-major over (m, n).
inline std::vector<SurfacePoint> loss_surface_2d(const LandscapeProbe& probe, const std::vector<double>& m_grid,
                                                 const std::vector<double>& n_grid, const Objective& J,
                                                 unsigned workers = 1) {
  if (m_grid.empty() || n_grid.empty()) throw std::invalid_argument("loss_surface_2d: empty grid");
  std::vector<SurfacePoint> out(m_grid.size() * n_grid.size());
  parallel_for(out.size(), workers, [&](std::size_t k) {
    const double m = m_grid[k / n_grid.size()], n = n_grid[k % n_grid.size()];
    out[k] = {m, n, J(probe.at(m, n))};
  });
  return out;
}

/// Fine-tuning CTC loss of `base` with its parameters replaced by theta,
/// on a fixed batch without augmentation. The base model is never modified.
inline Objective finetune_objective(const Model<float>& base, std::vector<Example> batch) {
  auto shared = std::make_shared<std::vector<Example>>(std::move(batch));
  auto proto = std::make_shared<Model<float>>(base.clone());
  return [proto, shared](const std::vector<double>& theta) {
    auto m = proto->clone();
    unflatten(m.parameters(), theta);
    NoGradScope<float> no_grad;
    return static_cast<double>(finetune_loss(m, *shared, 0, false).item());
  };
}

inline void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& pts) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << "m,loss\n";
  for (const auto& p : pts) f << format_double(p.m) << ',' << format_double(p.loss) << '\n';
}

inline void write_surface_csv(const std::filesystem::path& path, const std::vector<SurfacePoint>& pts) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << "m,n,loss\n";
  for (const auto& p : pts) f << format_double(p.m) << ',' << format_double(p.n) << ',' << format_double(p.loss) << '\n';
}

// ------------------------------------------------------------ layer distance

/// Mean over rows of ‖a_t − b_t‖ / ‖a_t‖ (a is the clean reference).
template <class T>
double normalized_distance(const Tensor<T>& clean, const Tensor<T>& noisy) {
  if (clean.shape() != noisy.shape() || clean.rank() != 2)
    throw DimensionError("layer_distance: representations " + shape_str(clean.shape()) + " and " +
                         shape_str(noisy.shape()) + " differ");
  const std::size_t r = clean.dim(0), c = clean.dim(1);
  double total = 0;
  for (std::size_t i = 0; i < r; ++i) {
    double num = 0, den = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const double a = clean[i * c + j], b = noisy[i * c + j];
      num += (a - b) * (a - b);
      den += a * a;
    }
    total += den > 0 ? std::sqrt(num / den) : (num > 0 ? std::sqrt(num) / 1e-12 : 0.0);
  }
  return total / static_cast<double>(r);
}

/// Branch input (layer 0) followed by every Transformer layer output.
template <class T>
std::vector<Tensor<T>> layer_representations(const Model<T>& model, std::span<const float> wave) {
  NoGradScope<T> no_grad;
  auto f = model.front_end(as_waveform_tensor<T>(wave));
  std::vector<Tensor<T>> reps{f.input};
  contextualize(model.normalize_features(f.input), model.transformer, &reps);
  return reps;
}

/// Per-layer distance between clean and noisy inputs, averaged over frames
/// of all utterances; length = 1 + Transformer layers.
template <class T>
std::vector<double> layer_distance(const Model<T>& model, std::span<const Example> pairs) {
  if (pairs.empty()) throw std::invalid_argument("layer_distance: no utterances");
  std::vector<double> sums(1 + model.cfg.transformer.layers, 0.0);
  std::size_t frames = 0;
  for (const auto& ex : pairs) {
    if (ex.clean.size() != ex.noisy.size())
      throw DimensionError("layer_distance: utterance " + ex.id + " clean/noisy lengths differ");
    auto rc = layer_representations(model, ex.clean);
    auto rn = layer_representations(model, ex.noisy);
    const std::size_t n = rc[0].dim(0);
    for (std::size_t l = 0; l < sums.size(); ++l) sums[l] += normalized_distance(rc[l], rn[l]) * n;
    frames += n;
  }
  for (auto& s : sums) s /= static_cast<double>(frames);
  return sums;
}

inline void write_layerdist_csv(const std::filesystem::path& path, const std::vector<double>& d) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << "layer,distance\n";
  for (std::size_t l = 0; l < d.size(); ++l) f << l << ',' << format_double(d[l]) << '\n';
}

// ------------------------------------------------------- validation series

/// Reads `<run_dir>/validation.csv` as (epoch, contrastive loss) pairs.
inline std::vector<std::pair<std::size_t, double>> track_validation_loss(const std::filesystem::path& run_dir) {
  const auto path = run_dir / "validation.csv";
  std::ifstream f(path);
  if (!f) throw std::runtime_error("no validation log at " + path.string());
  std::string line;
  std::getline(f, line);
  std::vector<std::pair<std::size_t, double>> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto cols = detail::csv_split(line);
    if (cols.size() != 3) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    out.emplace_back(std::stoull(cols[0]), std::stod(cols[2]));
  }
  if (out.empty()) throw std::runtime_error(path.string() + ": no validation entries");
  return out;
}

// --------------------------------------------------------- gradient checks

struct GradCheckEntry {
  std::string name;
  bool composite = false;
  std::function<GradCheckResult()> run;
};

struct GradCheckRow {
  std::string name;
  double max_rel_error = 0.0, threshold = 0.0;
  std::size_t checked = 0;
  bool pass = false;
  double seconds = 0.0;
};

constexpr double kPrimitiveTolerance = 1e-4;
constexpr double kCompositeTolerance = 1e-3;

namespace detail {

inline Tensor<double> rand_t(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(s), true);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

/// Values bounded away from zero (for ops with a kink there).
inline Tensor<double> rand_away(Shape s, Rng& rng) {
  Tensor<double> t(std::move(s), true);
  for (auto& v : t.values()) v = (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.1, 1.0);
  return t;
}

/// Fixed random projection that turns any tensor into a scalar loss.
inline Tensor<double> probe_sum(const Tensor<double>& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  std::vector<double> w(y.size());
  for (auto& v : w) v = rng.uniform(-1, 1);
  return sum(mul_const(y, w));
}

}  // namespace detail

/// Every registered finite-difference check (double precision).
inline std::vector<GradCheckEntry> gradcheck_registry() {
  using detail::probe_sum;
  using detail::rand_away;
  using detail::rand_t;
  using D = double;
  std::vector<GradCheckEntry> reg;
  auto prim = [&](std::string name, std::function<GradCheckResult()> fn) { reg.push_back({std::move(name), false, std::move(fn)}); };
  auto comp = [&](std::string name, std::function<GradCheckResult()> fn) { reg.push_back({std::move(name), true, std::move(fn)}); };

  prim("add", [] { Rng r(1); auto a = rand_t({3, 4}, r), b = rand_t({3, 4}, r);
    return gradcheck([&] { return probe_sum(add(a, b)); }, {a, b}); });
  prim("mul", [] { Rng r(2); auto a = rand_t({3, 4}, r), b = rand_t({3, 4}, r), s = rand_t({}, r);
    return gradcheck([&] { return probe_sum(mul(mul(a, b), s)); }, {a, b, s}); });
  prim("matmul", [] { Rng r(3); auto a = rand_t({3, 5}, r), b = rand_t({5, 2}, r);
    return gradcheck([&] { return probe_sum(matmul(a, b)); }, {a, b}); });
  prim("linear", [] { Rng r(4); auto x = rand_t({3, 5}, r), w = rand_t({5, 2}, r), b = rand_t({2}, r);
    return gradcheck([&] { return probe_sum(linear(x, w, b)); }, {x, w, b}); });
  prim("relu", [] { Rng r(5); auto x = rand_away({4, 4}, r); return gradcheck([&] { return probe_sum(relu(x)); }, {x}); });
  prim("gelu", [] { Rng r(6); auto x = rand_t({4, 4}, r, -3, 3); return gradcheck([&] { return probe_sum(gelu(x)); }, {x}); });
  prim("sigmoid", [] { Rng r(7); auto x = rand_t({4, 4}, r, -3, 3); return gradcheck([&] { return probe_sum(sigmoid(x)); }, {x}); });
  prim("tanh", [] { Rng r(8); auto x = rand_t({4, 4}, r, -3, 3); return gradcheck([&] { return probe_sum(tanh(x)); }, {x}); });
  prim("exp", [] { Rng r(9); auto x = rand_t({4, 4}, r); return gradcheck([&] { return probe_sum(exp(x)); }, {x}); });
  prim("log_floor", [] { Rng r(10); auto x = rand_t({4, 4}, r, 0.1, 2); return gradcheck([&] { return probe_sum(log_floor(x, 1e-7)); }, {x}); });
  prim("square", [] { Rng r(11); auto x = rand_t({4, 4}, r); return gradcheck([&] { return probe_sum(square(x)); }, {x}); });
  prim("abs", [] { Rng r(12); auto x = rand_away({4, 4}, r); return gradcheck([&] { return probe_sum(abs(x)); }, {x}); });
  prim("sum_mean_scale", [] { Rng r(13); auto x = rand_t({4, 4}, r);
    return gradcheck([&] { return add(scale(sum(square(x)), 0.3), mean(x)); }, {x}); });
  prim("reshape_transpose", [] { Rng r(14); auto x = rand_t({3, 4}, r);
    return gradcheck([&] { return probe_sum(transpose(reshape(x, {4, 3}))); }, {x}); });
  prim("concat_slice", [] { Rng r(15); auto a = rand_t({2, 3}, r), b = rand_t({2, 2}, r);
    return gradcheck([&] { auto c = concat(std::vector<Tensor<D>>{a, b}, 1);
      return probe_sum(concat(std::vector<Tensor<D>>{slice_cols(c, 1, 3), slice_cols(slice_rows(c, 1, 1), 2, 3)}, 0)); }, {a, b}); });
  prim("gather_rows", [] { Rng r(16); auto x = rand_t({4, 3}, r);
    return gradcheck([&] { return probe_sum(gather_rows(x, {0, 2, 2, 3})); }, {x}); });
  prim("gather_per_row", [] { Rng r(17); auto x = rand_t({3, 4}, r);
    return gradcheck([&] { return probe_sum(gather_per_row(x, {{0, 1}, {3, 3}, {2, 0}})); }, {x}); });
  prim("replace_rows", [] { Rng r(18); auto x = rand_t({4, 3}, r), row = rand_t({3}, r);
    return gradcheck([&] { return probe_sum(replace_rows(x, {true, false, true, false}, row)); }, {x, row}); });
  prim("resize_cols", [] { Rng r(19); auto x = rand_t({2, 5}, r);
    return gradcheck([&] { return add(probe_sum(resize_cols(x, 3)), probe_sum(resize_cols(x, 7), 5)); }, {x}); });
  prim("broadcast_rows_cols", [] { Rng r(20); auto x = rand_t({3, 4}, r), c = rand_t({4}, r), rr = rand_t({3}, r);
    return gradcheck([&] { return probe_sum(add_rows(mul_rows(add_bias(mul_cols(x, c), c), rr), rr)); }, {x, c, rr}); });
  prim("softmax", [] { Rng r(21); auto x = rand_t({3, 5}, r, -2, 2); return gradcheck([&] { return probe_sum(softmax(x)); }, {x}); });
  prim("log_softmax", [] { Rng r(22); auto x = rand_t({3, 5}, r, -2, 2); return gradcheck([&] { return probe_sum(log_softmax(x)); }, {x}); });
  prim("layer_norm", [] { Rng r(23); auto x = rand_t({3, 6}, r), g = rand_t({6}, r), b = rand_t({6}, r);
    return gradcheck([&] { return probe_sum(layer_norm(x, g, b)); }, {x, g, b}); });
  prim("channel_norm", [] { Rng r(24); auto x = rand_t({3, 6}, r), g = rand_t({3}, r), b = rand_t({3}, r);
    return gradcheck([&] { return probe_sum(channel_norm(x, g, b)); }, {x, g, b}); });
  prim("l2_norm", [] { Rng r(25); auto x = rand_t({3, 4}, r); return gradcheck([&] { return probe_sum(l2_norm(x)); }, {x}); });
  prim("normalize_l2", [] { Rng r(26); auto x = rand_t({3, 4}, r); return gradcheck([&] { return probe_sum(normalize_l2(x)); }, {x}); });
  prim("cosine_similarity", [] { Rng r(27); auto a = rand_t({3, 4}, r), b = rand_t({3, 4}, r);
    return gradcheck([&] { return probe_sum(cosine_similarity(a, b)); }, {a, b}); });
  prim("glu", [] { Rng r(28); auto x = rand_t({4, 4}, r);
    return gradcheck([&] { return add(probe_sum(glu(x, 0)), probe_sum(glu(x, 1), 3)); }, {x}); });
  prim("conv1d", [] { Rng r(29); auto x = rand_t({2, 17}, r), w = rand_t({3, 2, 4}, r), b = rand_t({3}, r);
    return gradcheck([&] { return probe_sum(conv1d(x, w, b, 3)); }, {x, w, b}); });
  prim("transposed_conv1d", [] { Rng r(30); auto x = rand_t({2, 5}, r), w = rand_t({2, 3, 4}, r), b = rand_t({3}, r);
    return gradcheck([&] { return probe_sum(transposed_conv1d(x, w, b, 2)); }, {x, w, b}); });
  prim("stft_magnitude", [] { Rng r(31); auto x = rand_t({1, 48}, r);
    return gradcheck([&] { return probe_sum(stft_magnitude(x, StftConfig{16, 8, 12})); }, {x}); });
  prim("ctc_loss", [] { Rng r(33); auto x = rand_t({3, 3}, r, -2, 2);
    return gradcheck([&] { return ctc_loss(log_softmax(x), {1, 2}); }, {x}); });

  comp("lstm", [] { Rng r(40); auto x = rand_t({5, 3}, r);
    std::vector<LstmLayerParams<D>> L{{rand_t({3, 12}, r), rand_t({3, 12}, r), rand_t({12}, r)},
                                      {rand_t({3, 12}, r), rand_t({3, 12}, r), rand_t({12}, r)}};
    return gradcheck([&] { return probe_sum(lstm_forward(x, L)); }, {x, L[0].w_input, L[0].w_hidden, L[1].bias}); });
  comp("L_SE spectral_convergence", [] { Rng r(41); auto a = rand_t({1, 64}, r), b = rand_t({1, 64}, r);
    return gradcheck([&] { return spectral_convergence_loss(a, b, StftConfig{32, 8, 16}); }, {a, b}); });
  comp("L_SE log_magnitude", [] { Rng r(42); auto a = rand_t({1, 64}, r), b = rand_t({1, 64}, r);
    return gradcheck([&] { return log_magnitude_loss(a, b, StftConfig{32, 8, 16}); }, {a, b}); });
  comp("L_SE", [] { Rng r(43); auto a = rand_t({1, 200}, r), b = rand_t({1, 200}, r);
    return gradcheck([&] { return se_loss(a, b, MultiResConfig::toy()); }, {a, b}, 40); });
  comp("enhancer", [] { Rng r(44); EnhancerParams<D> p({2, 4, 8, 4, 1}, r);
    Rng d(45); auto x = rand_t({1, 300}, d, -0.5, 0.5); auto clean = rand_t({1, 300}, d, -0.5, 0.5);
    clean.set_requires_grad(false);
    return gradcheck([&] { return se_loss(clean, enhance(x, p), MultiResConfig::toy()); },
                     {p.encoder[0].conv_w, p.lstm[0].w_hidden, p.decoder[0].deconv_w, x}, 12); });
  comp("feature_encoder", [] { Rng r(46); FeatureEncoderParams<D> p({{5, 2}, {10, 3}, 6}, r);
    Rng d(47); auto x = rand_t({1, 120}, d);
    return gradcheck([&] { return probe_sum(encode(x, p)); }, {p.weights[0], p.weights[1], p.norm_gain, x}, 20); });
  comp("L_c", [] { Rng r(48); auto a = rand_t({5, 4}, r), b = rand_t({5, 4}, r);
    return gradcheck([&] { return consistency_loss_c(a, b); }, {a, b}); });
  comp("L_cs", [] { Rng r(49); auto a = rand_t({5, 4}, r), b = rand_t({5, 4}, r), c = rand_t({5, 4}, r);
    return gradcheck([&] { return consistency_loss_cs(a, b, c); }, {a, b, c}); });
  comp("L_f", [] { Rng r(50); auto a = rand_t({5, 4}, r); return gradcheck([&] { return feature_penalty_f(a); }, {a}); });
  comp("gumbel_softmax (soft path)", [] { Rng r(51); auto l = rand_t({2, 5}, r, -2, 2); auto noise = gumbel_noise<D>(10, r);
    return gradcheck([&] { return mean(gumbel_softmax(l, 0.7, noise).soft); }, {l}); });
  comp("L_d paper", [] { Rng r(52); auto l = rand_t({2, 4}, r, -2, 2);
    return gradcheck([&] { return diversity_loss(softmax(l), DiversitySign::Paper); }, {l}); });
  comp("L_d entropy", [] { Rng r(53); auto l = rand_t({2, 4}, r, -2, 2);
    return gradcheck([&] { return diversity_loss(softmax(l), DiversitySign::Entropy); }, {l}); });
  comp("quantizer (soft selection)", [] { Rng r(54); CodebookState<D> s({2, 4, 3, 5, 6}, r);
    Rng d(55); auto z = rand_t({4, 5}, d); auto noise = gumbel_noise<D>(4 * 8, d);
    return gradcheck([&] { auto q = quantize(z, s, noise, Selection::Soft);
      return add(probe_sum(q.q), diversity_loss(average_probs(q.probs, 2, 4))); }, {z, s.proj_in_w, s.entries, s.proj_out_w}); });
  comp("multihead", [] { Rng r(56); MultiheadParams<D> p(8, 2, r); auto q = rand_t({3, 8}, r), kv = rand_t({4, 8}, r);
    return gradcheck([&] { return probe_sum(multihead(q, kv, kv, p)); }, {q, kv, p.wq, p.wk, p.wv, p.wo}); });
  comp("fusion dual attention", [] { Rng r(57); DualAttentionParams<D> p(8, 2, r); auto en = rand_t({3, 8}, r), no = rand_t({3, 8}, r);
    return gradcheck([&] { return probe_sum(fuse_dual_attention(en, no, p)); }, {en, no, p.en_queries.wq, p.noisy_out.w}); });
  comp("fusion concat", [] { Rng r(58); LinearParams<D> p(16, 8, r); auto en = rand_t({3, 8}, r), no = rand_t({3, 8}, r);
    return gradcheck([&] { return probe_sum(fuse_concat(en, no, p)); }, {en, no, p.w, p.b}); });
  comp("transformer", [] { Rng r(59); TransformerParams<D> p({2, 8, 2, 16, 8}, r); auto z = rand_t({4, 8}, r);
    return gradcheck([&] { return probe_sum(contextualize(z, p)); },
                     {z, p.positions, p.layers[0].attention.wk, p.layers[1].ff_in.w, p.layers[1].ln2_gain}, 24); });
  comp("L_m contrastive", [] { Rng r(60); auto c = rand_t({8, 6}, r), q = rand_t({8, 6}, r);
    std::vector<bool> mask{true, false, true, true, false, true, true, true};
    LossWeights w; w.distractors = 4;
    return gradcheck([&] { Rng s(61); return contrastive_loss(c, q, mask, w, s); }, {c, q}); });
  comp("CTC head", [] { Rng r(62); auto h = rand_t({6, 4}, r); LinearParams<D> p(4, 3, r);
    return gradcheck([&] { return ctc_loss(log_softmax(p(h)), {1, 2, 2}); }, {h, p.w, p.b}); });
  comp("total pretrain loss (EW2_SEW2)", [] {
    ModelConfig cfg;
    cfg.encoder = {{5, 2}, {10, 3}, 8};
    cfg.enhancer = {1, 2, 8, 4, 1};
    cfg.quantizer = {2, 4, 4, 8, 8};
    cfg.transformer = {1, 8, 2, 8, 64};
    cfg.fusion_heads = 2;
    cfg.stft = MultiResConfig{{{32, 8, 16}}};
    cfg.weights.distractors = 3;
    Model<D> model(cfg, 3);
    Rng d(64);
    Example ex;
    ex.id = "g";
    for (int i = 0; i < 240; ++i) {
      ex.clean.push_back(static_cast<float>(d.uniform(-0.5, 0.5)));
      ex.noisy.push_back(ex.clean.back() + static_cast<float>(d.uniform(-0.2, 0.2)));
    }
    std::vector<Example> batch{ex};
    // every parameter, two entries each; the data seed and the small step keep
    // the enhancer's ReLU pre-activations clear of their kink
    std::vector<Tensor<D>> probe;
    for (const auto& p : model.parameters()) probe.push_back(p.tensor);
    return gradcheck([&] { return pretrain_loss(model, batch, 5, Selection::Soft).loss.total; }, probe, 2, 1e-5);
  });
  return reg;
}

inline std::vector<GradCheckRow> gradcheck_suite(const std::vector<GradCheckEntry>& reg = gradcheck_registry()) {
  std::vector<GradCheckRow> rows;
  for (const auto& e : reg) {
    GradCheckRow row;
    row.name = e.name;
    row.threshold = e.composite ? kCompositeTolerance : kPrimitiveTolerance;
    const auto t0 = std::chrono::steady_clock::now();
    auto r = e.run();
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    row.max_rel_error = r.max_rel_error;
    row.checked = r.checked;
    row.pass = r.checked > 0 && std::isfinite(r.max_rel_error) && r.max_rel_error < row.threshold;
    rows.push_back(row);
  }
  return rows;
}

/// False for an empty report or any failing row.
inline bool suite_passed(const std::vector<GradCheckRow>& rows) {
  if (rows.empty()) return false;
  for (const auto& r : rows)
    if (!r.pass) return false;
  return true;
}

}  // namespace sslse
