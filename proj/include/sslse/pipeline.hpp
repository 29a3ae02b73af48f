#pragma once

// Pre-training and fine-tuning steps, the training loops around them, and
// SNR-bucketed evaluation.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sslse/checkpoint.hpp"
#include "sslse/corpus.hpp"
#include "sslse/model.hpp"
#include "sslse/optimizer.hpp"
#include "sslse/parallel.hpp"

namespace sslse {

/// One utterance in memory. `clean` may be empty for fine-tuning data.
struct Example {
  std::string id;
  std::string transcript;
  Waveform clean, noisy;
  double snr_db = 0.0;
};

inline std::vector<Example> load_examples(const Manifest& m, unsigned workers = 1) {
  if (m.rows.empty()) throw std::invalid_argument("manifest " + m.split + " is empty");
  std::vector<Example> out(m.rows.size());
  parallel_for(m.rows.size(), workers, [&](std::size_t i) {
    const auto& u = m.rows[i];
    auto pair = load_pair(m, u);
    out[i] = {u.id, u.transcript, std::move(pair.clean), std::move(pair.noisy), u.snr_db};
  });
  return out;
}

inline std::vector<Example> load_examples(const std::filesystem::path& manifest, unsigned workers = 1) {
  return load_examples(read_manifest(manifest), workers);
}

/// Adds spans at random starts until at least `minimum` entries are set.
inline void ensure_masked(std::vector<bool>& mask, std::size_t span, std::size_t minimum, Rng& rng) {
  minimum = std::min(minimum, mask.size());
  auto count = [&] { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)); };
  while (count() < minimum) {
    const std::size_t t = rng.index(mask.size());
    for (std::size_t k = t; k < std::min(mask.size(), t + span); ++k) mask[k] = true;
  }
}

// ------------------------------------------------------------- pre-training

template <class T>
struct PretrainGraph {
  TotalLoss<T> loss;
  double perplexity = 0.0;
};

/// Builds the pre-training loss for a batch (recording on the active tape).
/// Soft selection replaces the one-hot codeword pick by its relaxation,
/// which makes the loss smooth in every parameter (used for gradient checks).
template <class T>
PretrainGraph<T> pretrain_loss(const Model<T>& model, std::span<const Example> batch, std::uint64_t seed,
                               Selection selection = Selection::Hard) {
  const auto& cfg = model.cfg;
  const bool joint = uses_enhancer(cfg.branch);
  Tensor<T> contrast_sum, consist_sum, penalty_sum, se_sum;
  std::size_t masked_frames = 0, frames = 0, elements = 0;
  std::vector<Tensor<T>> probs;
  std::vector<std::size_t> hard;
  auto acc = [](Tensor<T>& total, const Tensor<T>& v) { total = total.defined() ? add(total, v) : v; };

  for (std::size_t u = 0; u < batch.size(); ++u) {
    const auto& ex = batch[u];
    if (ex.clean.empty()) throw std::invalid_argument("pretrain: utterance " + ex.id + " has no clean signal");
    if (ex.clean.size() != ex.noisy.size())
      throw std::invalid_argument("pretrain: utterance " + ex.id + " clean/noisy lengths differ");
    Rng rng(derive_seed(seed, u));
    auto clean = as_waveform_tensor<T>(ex.clean);
    auto noisy = as_waveform_tensor<T>(ex.noisy);

    auto z_clean = encode(clean, model.encoder);
    auto qr = quantize(model.normalize_features(z_clean), model.quantizer, rng, selection);
    auto targets = cfg.stop_grad_targets ? qr.q.detach() : qr.q;
    probs.push_back(qr.probs);
    hard.insert(hard.end(), qr.hard_indices.begin(), qr.hard_indices.end());

    auto f = model.front_end(noisy, true);
    const std::size_t n = f.input.dim(0);
    if (n != z_clean.dim(0)) throw DimensionError("pretrain: clean and branch frame counts differ");
    frames += n;
    elements += f.input.size();
    acc(penalty_sum, sum(square(f.input)));
    auto consist = joint ? consistency_loss_cs(f.z_noisy, f.z_en, z_clean) : consistency_loss_c(f.z_noisy, z_clean);
    acc(consist_sum, scale(consist, static_cast<T>(n)));
    if (joint) acc(se_sum, se_loss(clean, f.x_en, cfg.stft));

    auto mask = sample_span_mask(n, cfg.pretrain_mask, rng);
    ensure_masked(mask, cfg.pretrain_mask.span, 2, rng);
    auto context = contextualize(replace_rows(model.normalize_features(f.input), mask, model.mask_embedding), model.transformer);
    auto cs = contrastive_sum(context, targets, mask, cfg.weights, rng, cfg.exclude_identical_distractors);
    acc(contrast_sum, cs.total);
    masked_frames += cs.frames;
  }

  LossComponents<T> parts;
  parts[joint ? "L_ms" : "L_m"] = scale(contrast_sum, T(1) / static_cast<T>(masked_frames));
  parts[joint ? "L_cs" : "L_c"] = scale(consist_sum, T(1) / static_cast<T>(frames));
  parts["L_f"] = scale(penalty_sum, T(1) / static_cast<T>(elements));
  parts["L_d"] = diversity_loss(average_probs(concat(probs, 0), cfg.quantizer.groups, cfg.quantizer.entries),
                                cfg.diversity);
  if (joint) parts["L_SE"] = scale(se_sum, T(1) / static_cast<T>(batch.size()));
  PretrainGraph<T> g{total_pretrain_loss(parts, cfg.weights, cfg.branch),
                     codebook_perplexity(hard, cfg.quantizer.groups, cfg.quantizer.entries)};
  return g;
}

/// One pre-training update: loss, backward, Adam step, temperature anneal.
inline LossReport pretrain_step(Model<float>& model, Adam<float>& optim, std::span<const Example> batch,
                                std::uint64_t seed) {
  auto params = model.parameters();
  zero_grads(params);
  LossReport report;
  {
    Tape<float> tape;
    auto g = pretrain_loss(model, batch, seed);
    tape.backward(g.loss.total);
    report = g.loss.report;
    report.terms["perplexity"] = g.perplexity;
  }
  report.terms["tau"] = model.quantizer.tau;
  optim.step(params);
  zero_grads(params);
  anneal_temperature(model.quantizer);
  return report;
}

/// Contrastive term on a frozen model over a fixed set (no gradient).
/// Targets use the noise-free argmax code, as at inference time.
template <class T>
double validation_contrastive(const Model<T>& model, std::span<const Example> examples, std::uint64_t seed) {
  NoGradScope<T> no_grad;
  double total = 0;
  std::size_t frames = 0;
  for (std::size_t u = 0; u < examples.size(); ++u) {
    Rng rng(derive_seed(seed, u));
    auto z_clean = encode(as_waveform_tensor<T>(examples[u].clean), model.encoder);
    const std::vector<T> no_noise(z_clean.dim(0) * model.cfg.quantizer.groups * model.cfg.quantizer.entries, T(0));
    auto q = quantize(model.normalize_features(z_clean), model.quantizer, no_noise, Selection::Hard).q;
    auto f = model.front_end(as_waveform_tensor<T>(examples[u].noisy));
    auto mask = sample_span_mask(f.input.dim(0), model.cfg.pretrain_mask, rng);
    ensure_masked(mask, model.cfg.pretrain_mask.span, 2, rng);
    auto context = contextualize(replace_rows(model.normalize_features(f.input), mask, model.mask_embedding), model.transformer);
    auto cs = contrastive_sum(context, q, mask, model.cfg.weights, rng, model.cfg.exclude_identical_distractors);
    total += static_cast<double>(cs.total.item());
    frames += cs.frames;
  }
  return total / static_cast<double>(frames);
}

// --------------------------------------------------------------- fine-tuning

struct FinetuneOptions {
  bool augment = true;
  bool freeze_encoder = false;
};

template <class T>
Tensor<T> finetune_loss(const Model<T>& model, std::span<const Example> batch, std::uint64_t seed, bool augment) {
  const auto vocab = model.cfg.vocabulary();
  Tensor<T> total;
  for (std::size_t u = 0; u < batch.size(); ++u) {
    Rng rng(derive_seed(seed, u));
    auto f = model.front_end(as_waveform_tensor<T>(batch[u].noisy));
    auto x = model.normalize_features(f.input);
    if (augment) {
      auto mask = sample_span_mask(x.dim(0), model.cfg.finetune_time_mask, rng);
      x = replace_rows(x, mask, model.mask_embedding);
      x = mask_channels(x, model.cfg.finetune_channel_mask, rng);
    }
    auto loss = ctc_loss(model.recognize(x), vocab.encode(batch[u].transcript));
    total = total.defined() ? add(total, loss) : loss;
  }
  return scale(total, T(1) / static_cast<T>(batch.size()));
}

/// One fine-tuning update on (noisy, transcript) pairs with CTC.
inline LossReport finetune_step(Model<float>& model, Adam<float>& optim, std::span<const Example> batch,
                                std::uint64_t seed, const FinetuneOptions& opt = {}) {
  auto params = model.parameters();
  zero_grads(params);
  LossReport report;
  {
    Tape<float> tape;
    auto loss = finetune_loss(model, batch, seed, opt.augment);
    tape.backward(loss);
    report.terms["ctc"] = report.total = static_cast<double>(loss.item());
  }
  std::vector<std::string> frozen;
  if (opt.freeze_encoder) frozen.push_back("encoder.");
  optim.step(params, frozen);
  zero_grads(params);
  return report;
}

// --------------------------------------------------------------- evaluation

struct UtteranceResult {
  std::string id;
  double snr_db = 0;
  std::string ref, hyp;
  double cer = 0, wer = 0, ctc = 0;
  std::size_t char_edits = 0, chars = 0, word_edits = 0, words = 0;
};

struct BucketResult {
  std::string bucket;
  std::size_t utterances = 0;
  double ctc = 0, cer = 0, wer = 0;  // mean CTC; corpus-level error rates
};

struct EvalResult {
  std::vector<UtteranceResult> rows;
  std::vector<BucketResult> buckets;  // per SNR bucket, then "all"
};

/// 5 dB buckets: "0-5", ..., "20-25" (25 dB falls in the last), "clean" for +inf.
inline double snr_bucket_floor(double snr_db) {
  if (std::isinf(snr_db)) return snr_db;
  return snr_db == 25.0 ? 20.0 : std::floor(snr_db / 5.0) * 5.0;
}

inline std::string snr_bucket(double snr_db) {
  if (std::isinf(snr_db)) return "clean";
  const long lo = std::lround(snr_bucket_floor(snr_db));
  return std::to_string(lo) + "-" + std::to_string(lo + 5);
}

template <class T>
UtteranceResult evaluate_one(const Model<T>& model, const Example& ex) {
  NoGradScope<T> no_grad;
  const auto vocab = model.cfg.vocabulary();
  auto f = model.front_end(as_waveform_tensor<T>(ex.noisy));
  auto lp = model.recognize(model.normalize_features(f.input));
  UtteranceResult r;
  r.id = ex.id;
  r.snr_db = ex.snr_db;
  r.ref = ex.transcript;
  r.hyp = vocab.decode(greedy_decode(lp));
  r.ctc = static_cast<double>(ctc_loss(lp, vocab.encode(ex.transcript)).item());
  r.char_edits = edit_distance(chars(r.ref), chars(r.hyp));
  r.chars = r.ref.size();
  r.word_edits = edit_distance(words(r.ref), words(r.hyp));
  r.words = words(r.ref).size();
  r.cer = cer(r.ref, r.hyp);
  r.wer = wer(r.ref, r.hyp);
  return r;
}

template <class T>
EvalResult evaluate(const Model<T>& model, std::span<const Example> examples, unsigned workers = 1) {
  if (examples.empty()) throw std::invalid_argument("evaluate: empty split");
  EvalResult out;
  out.rows.resize(examples.size());
  parallel_for(examples.size(), workers, [&](std::size_t i) { out.rows[i] = evaluate_one(model, examples[i]); });

  struct Acc {
    std::size_t n = 0, ce = 0, cn = 0, we = 0, wn = 0;
    double ctc = 0;
  };
  std::map<double, Acc> acc;  // keyed by bucket floor, so rows come out in SNR order
  auto add_to = [](Acc& a, const UtteranceResult& r) {
    ++a.n;
    a.ce += r.char_edits;
    a.cn += r.chars;
    a.we += r.word_edits;
    a.wn += r.words;
    a.ctc += r.ctc;
  };
  Acc all;
  for (const auto& r : out.rows) {
    add_to(acc[snr_bucket_floor(r.snr_db)], r);
    add_to(all, r);
  }
  auto finish = [](const std::string& name, const Acc& a) {
    return BucketResult{name, a.n, a.ctc / static_cast<double>(a.n),
                        static_cast<double>(a.ce) / static_cast<double>(a.cn),
                        static_cast<double>(a.we) / static_cast<double>(a.wn)};
  };
  for (const auto& [lo, a] : acc) out.buckets.push_back(finish(snr_bucket(lo), a));
  out.buckets.push_back(finish("all", all));
  return out;
}

inline void write_metrics_csv(const std::filesystem::path& path, const EvalResult& r) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << "utterance_id,snr_db,ref,hyp,cer,wer\n";
  for (const auto& u : r.rows)
    f << detail::csv_field(u.id) << ',' << format_double(u.snr_db) << ',' << detail::csv_field(u.ref) << ','
      << detail::csv_field(u.hyp) << ',' << format_double(u.cer) << ',' << format_double(u.wer) << '\n';
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline void write_buckets_csv(const std::filesystem::path& path, const EvalResult& r) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << "bucket,utterances,ctc_loss,cer,wer\n";
  for (const auto& b : r.buckets)
    f << b.bucket << ',' << b.utterances << ',' << format_double(b.ctc) << ',' << format_double(b.cer) << ','
      << format_double(b.wer) << '\n';
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

// ------------------------------------------------------------ training loops

struct TrainOptions {
  std::size_t steps = 200;
  std::size_t batch_size = 4;
  std::size_t eval_every = 0;  // 0: once per epoch
  std::uint64_t seed = 1;
  FinetuneOptions finetune;
  std::function<void(std::size_t step, const LossReport&)> on_step;
};

/// Fixed-seed shuffled batches; an epoch is one pass over `n` examples.
class BatchSchedule {
 public:
  BatchSchedule(std::size_t n, std::size_t batch, std::uint64_t seed) : n_(n), batch_(batch), seed_(seed) {
    if (n == 0) throw std::invalid_argument("training set is empty");
    if (batch == 0) throw std::invalid_argument("batch_size must be positive");
    batch_ = std::min(batch_, n_);
  }
  std::size_t steps_per_epoch() const { return (n_ + batch_ - 1) / batch_; }

  std::vector<std::size_t> batch(std::size_t step) {
    const std::size_t epoch = step / steps_per_epoch(), k = step % steps_per_epoch();
    if (epoch != epoch_ || order_.empty()) {
      Rng rng(derive_seed(seed_, epoch));
      order_ = rng.sample_without_replacement(n_, n_);
      epoch_ = epoch;
    }
    std::vector<std::size_t> out;
    for (std::size_t i = k * batch_; i < std::min(n_, (k + 1) * batch_); ++i) out.push_back(order_[i]);
    return out;
  }

 private:
  std::size_t n_, batch_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::vector<std::size_t> order_;
};

struct ValidationPoint {
  std::size_t epoch = 0, step = 0;
  double contrastive = 0.0;
};

inline std::vector<Example> gather(std::span<const Example> all, const std::vector<std::size_t>& idx) {
  std::vector<Example> out;
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

struct PretrainHistory {
  std::vector<LossReport> steps;
  std::vector<ValidationPoint> validation;
};

inline PretrainHistory run_pretrain(Model<float>& model, Adam<float>& optim, std::span<const Example> train,
                                    std::span<const Example> valid, const TrainOptions& opt) {
  BatchSchedule schedule(train.size(), opt.batch_size, derive_seed(opt.seed, "batches"));
  const std::size_t every = opt.eval_every ? opt.eval_every : schedule.steps_per_epoch();
  PretrainHistory h;
  for (std::size_t s = 0; s < opt.steps; ++s) {
    auto batch = gather(train, schedule.batch(s));
    auto r = pretrain_step(model, optim, batch, derive_seed(derive_seed(opt.seed, "pretrain"), s));
    if (opt.on_step) opt.on_step(s, r);
    h.steps.push_back(std::move(r));
    if (!valid.empty() && (s + 1) % every == 0)
      h.validation.push_back({h.validation.size() + 1, s + 1,
                              validation_contrastive(model, valid, derive_seed(opt.seed, "validation"))});
  }
  return h;
}

inline std::vector<LossReport> run_finetune(Model<float>& model, Adam<float>& optim, std::span<const Example> train,
                                            const TrainOptions& opt) {
  BatchSchedule schedule(train.size(), opt.batch_size, derive_seed(opt.seed, "batches"));
  std::vector<LossReport> out;
  for (std::size_t s = 0; s < opt.steps; ++s) {
    auto batch = gather(train, schedule.batch(s));
    auto r = finetune_step(model, optim, batch, derive_seed(derive_seed(opt.seed, "finetune"), s), opt.finetune);
    if (opt.on_step) opt.on_step(s, r);
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_validation_csv(const std::filesystem::path& path, const std::vector<ValidationPoint>& points) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << "epoch,step,contrastive_loss\n";
  for (const auto& p : points) f << p.epoch << ',' << p.step << ',' << format_double(p.contrastive) << '\n';
}

inline void write_train_log(const std::filesystem::path& path, const std::vector<LossReport>& steps) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  if (steps.empty()) return;
  f << "step";
  for (const auto& [k, v] : steps[0].terms) f << ',' << k;
  f << '\n';
  for (std::size_t i = 0; i < steps.size(); ++i) {
    f << i + 1;
    for (const auto& [k, v] : steps[i].terms) f << ',' << format_double(v);
    f << '\n';
  }
}

inline AdamConfig adam_config(const RunConfig& rc) {
  return {rc.real("lr"), rc.count("warmup"), rc.real("adam_beta1"), rc.real("adam_beta2"), rc.real("adam_eps")};
}

}  // namespace sslse
