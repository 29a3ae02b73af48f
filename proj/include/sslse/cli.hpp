#pragma once

// The ssl-se-lab command line: corpus synthesis, pre-training, fine-tuning,
// evaluation, enhancement and diagnostics. Exit codes: 0 success, 1 usage
// error, 2 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "sslse/checkpoint.hpp"
#include "sslse/diagnostics.hpp"
#include "sslse/wav.hpp"

namespace sslse {

namespace cli_detail {

namespace fs = std::filesystem;

/// "lo:hi:n" grid specification.
inline std::vector<double> parse_grid(const std::string& spec) {
  std::stringstream ss(spec);
  std::string a, b, c;
  if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, c) || c.empty())
    throw std::invalid_argument("grid '" + spec + "' must look like lo:hi:count");
  try {
    return linspace(std::stod(a), std::stod(b), std::stoul(c));
  } catch (const std::logic_error&) {
    throw std::invalid_argument("grid '" + spec + "' must look like lo:hi:count");
  }
}

inline RunConfig build_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig rc = path.empty() ? RunConfig{} : RunConfig::load(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    rc.set(RunConfig::trim(kv.substr(0, eq)), RunConfig::trim(kv.substr(eq + 1)));
  }
  return rc;
}

inline std::string config_help() {
  std::ostringstream os;
  os << "Run configuration keys (key=value lines, '#' comments; unknown keys are rejected):\n";
  for (const auto& k : config_keys()) {
    os << "  " << std::left << std::setw(30) << k.name << k.help << " [default " << k.toy_default;
    if (!k.full_scale.empty()) os << "; full scale " << k.full_scale;
    os << "]\n";
  }
  return os.str();
}

struct TrainArgs {
  std::string config, train, valid, out, init, seed;
  std::vector<std::string> set;
  long long steps = -1;
};

inline void add_train_options(CLI::App* sub, TrainArgs& a, bool finetune) {
  sub->add_option("--config", a.config, "run configuration file");
  sub->add_option("--set", a.set, "override a configuration key (key=value, repeatable)");
  sub->add_option("--train", a.train, "training manifest (overrides train_manifest)");
  if (!finetune) sub->add_option("--valid", a.valid, "validation manifest (overrides valid_manifest)");
  if (finetune) sub->add_option("--init", a.init, "pre-trained checkpoint (overrides init_checkpoint)");
  sub->add_option("--out", a.out, "output directory (overrides out_dir)");
  sub->add_option("--steps", a.steps, "optimizer updates (overrides steps)");
  sub->footer(config_help());
}

inline RunConfig resolve_train_config(const TrainArgs& a, const std::string& seed_flag) {
  RunConfig rc = build_config(a.config, a.set);
  if (!a.train.empty()) rc.set("train_manifest", a.train);
  if (!a.valid.empty()) rc.set("valid_manifest", a.valid);
  if (!a.init.empty()) rc.set("init_checkpoint", a.init);
  if (!a.out.empty()) rc.set("out_dir", a.out);
  if (a.steps >= 0) rc.set("steps", std::to_string(a.steps));
  rc.set("seed", std::to_string(resolve_seed(seed_flag, rc.u64("seed"))));
  if (rc.str("train_manifest").empty()) throw std::invalid_argument("no training manifest (--train or train_manifest)");
  return rc;
}

inline TrainOptions train_options(const RunConfig& rc, std::ostream& out, const char* tag) {
  TrainOptions opt;
  opt.steps = rc.count("steps");
  opt.batch_size = rc.count("batch_size");
  opt.eval_every = rc.count("eval_every");
  opt.seed = rc.u64("seed");
  const std::size_t every = std::max<std::size_t>(1, opt.steps / 10);
  opt.on_step = [&out, tag, every, total = opt.steps](std::size_t s, const LossReport& r) {
    if ((s + 1) % every != 0 && s + 1 != total && s != 0) return;
    out << tag << " step " << s + 1 << "/" << total << " loss " << std::setprecision(6) << r.total << "\n";
  };
  return opt;
}

inline int cmd_synth(const CorpusConfig& cfg, const std::string& out_dir, std::ostream& out) {
  fs::create_directories(out_dir);
  auto m = build_corpus(cfg, out_dir);
  out << "wrote " << m.rows.size() << " utterances to " << (fs::path(out_dir) / "manifest.csv").string() << "\n";
  return 0;
}

inline int cmd_pretrain(const TrainArgs& a, const std::string& seed_flag, unsigned workers, std::ostream& out) {
  RunConfig rc = resolve_train_config(a, seed_flag);
  const fs::path dir = rc.str("out_dir");
  fs::create_directories(dir);
  auto train = load_examples(fs::path(rc.str("train_manifest")), workers);
  std::vector<Example> valid;
  if (!rc.str("valid_manifest").empty()) valid = load_examples(fs::path(rc.str("valid_manifest")), workers);
  Model<float> model(ModelConfig::from(rc), rc.u64("seed"));
  Adam<float> optim(adam_config(rc));
  auto history = run_pretrain(model, optim, train, valid, train_options(rc, out, "pretrain"));
  write_train_log(dir / "train_log.csv", history.steps);
  if (!valid.empty()) write_validation_csv(dir / "validation.csv", history.validation);
  write_file(dir / "config.cfg", rc.dump());
  save_checkpoint(dir / "model.ckpt", make_checkpoint(model, rc, &optim));
  out << "checkpoint " << (dir / "model.ckpt").string() << "\n";
  return 0;
}

inline int cmd_finetune(const TrainArgs& a, const std::string& seed_flag, unsigned workers, std::ostream& out) {
  RunConfig rc = resolve_train_config(a, seed_flag);
  const fs::path dir = rc.str("out_dir");
  const auto requested = parse_branch(rc.str("branch"));
  auto model = [&] {
    if (rc.str("init_checkpoint").empty()) return Model<float>(ModelConfig::from(rc), rc.u64("seed"));
    return restore_model(load_checkpoint(rc.str("init_checkpoint")), requested);
  }();
  model.cfg.finetune_time_mask = ModelConfig::from(rc).finetune_time_mask;
  model.cfg.finetune_channel_mask = ModelConfig::from(rc).finetune_channel_mask;
  fs::create_directories(dir);
  auto train = load_examples(fs::path(rc.str("train_manifest")), workers);
  Adam<float> optim(adam_config(rc));
  auto opt = train_options(rc, out, "finetune");
  opt.finetune.freeze_encoder = rc.flag("freeze_encoder");
  auto log = run_finetune(model, optim, train, opt);
  write_train_log(dir / "train_log.csv", log);
  write_file(dir / "config.cfg", rc.dump());
  // architecture keys come from the pre-trained checkpoint, training keys from this run
  RunConfig stored = rc;
  if (!rc.str("init_checkpoint").empty()) {
    const RunConfig pretrained = checkpoint_config(load_checkpoint(rc.str("init_checkpoint")));
    for (const auto& [k, v] : pretrained.values())
      if (!is_training_key(k)) stored.set(k, v);
  }
  stored.set("mode", "finetune");
  save_checkpoint(dir / "model.ckpt", make_checkpoint(model, stored, &optim));
  out << "checkpoint " << (dir / "model.ckpt").string() << "\n";
  return 0;
}

inline int cmd_eval(const std::string& ckpt, const std::string& manifest, const std::string& metrics,
                    const std::string& buckets, unsigned workers, std::ostream& out) {
  auto model = restore_model(load_checkpoint(ckpt));
  auto examples = load_examples(fs::path(manifest), workers);
  auto r = evaluate(model, examples, workers);
  if (auto parent = fs::path(metrics).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_metrics_csv(metrics, r);
  if (!buckets.empty()) write_buckets_csv(buckets, r);
  out << "bucket,utterances,ctc_loss,cer,wer\n";
  for (const auto& b : r.buckets)
    out << b.bucket << ',' << b.utterances << ',' << format_double(b.ctc) << ',' << format_double(b.cer) << ','
        << format_double(b.wer) << '\n';
  return 0;
}

inline int cmd_enhance(const std::string& ckpt, const std::string& in, const std::string& out_path,
                       std::ostream& out) {
  auto model = restore_model(load_checkpoint(ckpt));
  if (!model.enhancer)
    throw std::runtime_error("checkpoint branch " + to_string(model.cfg.branch) + " has no enhancer");
  auto wav = read_wav(in);
  if (wav.sample_rate != model.cfg.sample_rate)
    throw std::runtime_error(in + ": sample rate " + std::to_string(wav.sample_rate) + " Hz, model expects " +
                             std::to_string(model.cfg.sample_rate) + " Hz");
  NoGradScope<float> no_grad;
  auto y = model.run_enhancer(as_waveform_tensor<float>(wav.samples));
  WavData result{wav.sample_rate, y.values()};
  write_wav(out_path, result);
  out << "wrote " << out_path << "\n";
  return 0;
}

struct LandscapeArgs {
  std::string theta0, theta1, theta2, manifest, out, grid1 = "-1:2:31", grid_m = "-1:2:13", grid_n = "-1:2:13";
  std::size_t batch = 8;
};

inline int cmd_landscape(const LandscapeArgs& a, unsigned workers, std::ostream& out) {
  auto c0 = load_checkpoint(a.theta0), c1 = load_checkpoint(a.theta1), c2 = load_checkpoint(a.theta2);
  auto base = restore_model(c0);
  auto m1 = restore_model(c1, base.cfg.branch), m2 = restore_model(c2, base.cfg.branch);
  LandscapeProbe probe(flatten(base.parameters()), flatten(m1.parameters()), flatten(m2.parameters()));
  auto examples = load_examples(fs::path(a.manifest), workers);
  if (a.batch < examples.size()) examples.resize(a.batch);
  auto J = finetune_objective(base, examples);
  fs::create_directories(a.out);
  auto curve = loss_curve_1d(probe, parse_grid(a.grid1), J, workers);
  write_curve_csv(fs::path(a.out) / "curve1d.csv", curve);
  auto surface = loss_surface_2d(probe, parse_grid(a.grid_m), parse_grid(a.grid_n), J, workers);
  write_surface_csv(fs::path(a.out) / "surface2d.csv", surface);
  out << "wrote " << curve.size() << " curve and " << surface.size() << " surface points to " << a.out << "\n";
  return 0;
}

inline int cmd_layerdist(const std::string& ckpt, const std::string& manifest, const std::string& out_path,
                         unsigned workers, std::ostream& out) {
  auto model = restore_model(load_checkpoint(ckpt));
  auto examples = load_examples(fs::path(manifest), workers);
  auto d = layer_distance(model, examples);
  if (auto parent = fs::path(out_path).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_layerdist_csv(out_path, d);
  for (std::size_t l = 0; l < d.size(); ++l) out << "layer " << l << " distance " << format_double(d[l]) << "\n";
  return 0;
}

inline int cmd_gradcheck(std::ostream& out) {
  auto rows = gradcheck_suite();
  double seconds = 0;
  for (const auto& r : rows) {
    out << (r.pass ? "PASS " : "FAIL ") << std::left << std::setw(34) << r.name << " max_rel_error "
        << std::setw(12) << r.max_rel_error << " threshold " << r.threshold << " probes " << r.checked << "\n";
    seconds += r.seconds;
  }
  const bool ok = suite_passed(rows);
  out << (ok ? "all " : "NOT all ") << rows.size() << " gradient checks passed (" << std::fixed
      << std::setprecision(1) << seconds << " s)\n";
  out.unsetf(std::ios::fixed);
  return ok ? 0 : 2;
}

}  // namespace cli_detail

/// Runs the command line `args` (args[0] is the program name).
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"ssl-se-lab: noise-robust self-supervised speech pre-training toolkit", "ssl-se-lab"};
  app.require_subcommand(1);
  std::string seed_flag;
  unsigned workers = 1;
  app.add_option("--seed", seed_flag, "master seed (falls back to SSL_SE_LAB_SEED, then the config seed)");
  app.add_option("--workers", workers, "worker threads for generation, evaluation and landscapes")
      ->check(CLI::PositiveNumber);

  CorpusConfig corpus;
  std::string corpus_out, noise_list = "white,filtered,hum", alphabet = "toy";
  auto* synth = app.add_subcommand("synth-data", "generate a synthetic clean/noisy corpus and its manifest");
  synth->add_option("--out", corpus_out, "output directory")->required();
  synth->add_option("--split", corpus.split, "split tag")->check(CLI::IsMember({"pretrain", "finetune", "dev", "test"}));
  synth->add_option("--count", corpus.count, "number of utterances")->check(CLI::PositiveNumber);
  synth->add_option("--min-chars", corpus.min_chars, "shortest transcript")->check(CLI::PositiveNumber);
  synth->add_option("--max-chars", corpus.max_chars, "longest transcript")->check(CLI::PositiveNumber);
  synth->add_option("--snr-min", corpus.snr_min_db, "lowest mixing SNR in dB");
  synth->add_option("--snr-max", corpus.snr_max_db, "highest mixing SNR in dB");
  synth->add_flag("--clean-only", corpus.clean_only, "no noise; snr_db is recorded as inf");
  synth->add_option("--noise-kinds", noise_list, "comma-separated subset of white,filtered,hum");
  synth->add_option("--sample-rate", corpus.clip.sample_rate, "sample rate in Hz")->check(CLI::PositiveNumber);
  synth->add_option("--alphabet", alphabet, "toy | paper")->check(CLI::IsMember({"toy", "paper"}));

  TrainArgs pre_args, ft_args;
  auto* pretrain = app.add_subcommand("pretrain", "self-supervised pre-training on clean/noisy pairs");
  add_train_options(pretrain, pre_args, false);
  auto* finetune = app.add_subcommand("finetune", "CTC fine-tuning on noisy speech with transcripts");
  add_train_options(finetune, ft_args, true);

  std::string eval_ckpt, eval_manifest, eval_metrics, eval_buckets;
  auto* eval = app.add_subcommand("eval", "greedy CTC decoding with CER/WER per SNR bucket");
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval->add_option("--manifest", eval_manifest, "evaluation manifest")->required();
  eval->add_option("--out", eval_metrics, "per-utterance metrics CSV")->required();
  eval->add_option("--buckets", eval_buckets, "per-bucket summary CSV");

  std::string enh_ckpt, enh_in, enh_out;
  auto* enhance_cmd = app.add_subcommand("enhance", "run the speech enhancement front end on a WAV file");
  enhance_cmd->add_option("--checkpoint", enh_ckpt, "checkpoint of a branch with an enhancer")->required();
  enhance_cmd->add_option("--in", enh_in, "noisy input WAV")->required();
  enhance_cmd->add_option("--out", enh_out, "enhanced output WAV")->required();

  LandscapeArgs land;
  auto* landscape = app.add_subcommand("landscape", "loss along checkpoint-difference directions");
  landscape->add_option("--theta0", land.theta0, "centre checkpoint (pre-trained)")->required();
  landscape->add_option("--theta1", land.theta1, "first direction endpoint (fine-tuned)")->required();
  landscape->add_option("--theta2", land.theta2, "second direction endpoint (any other checkpoint)")->required();
  landscape->add_option("--manifest", land.manifest, "evaluation manifest for the fine-tuning loss")->required();
  landscape->add_option("--out", land.out, "output directory for curve1d.csv and surface2d.csv")->required();
  landscape->add_option("--batch", land.batch, "utterances in the fixed evaluation batch")->check(CLI::PositiveNumber);
  landscape->add_option("--grid", land.grid1, "1-D grid lo:hi:count");
  landscape->add_option("--grid-m", land.grid_m, "2-D first-axis grid lo:hi:count");
  landscape->add_option("--grid-n", land.grid_n, "2-D second-axis grid lo:hi:count");

  std::string ld_ckpt, ld_manifest, ld_out;
  auto* layerdist = app.add_subcommand("layerdist", "normalized clean/noisy distance per layer");
  layerdist->add_option("--checkpoint", ld_ckpt, "model checkpoint")->required();
  layerdist->add_option("--manifest", ld_manifest, "manifest with clean and noisy pairs")->required();
  layerdist->add_option("--out", ld_out, "layerdist.csv path")->required();

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of every op and loss");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*synth) {
      corpus.seed = resolve_seed(seed_flag, 1);
      corpus.workers = workers;
      corpus.clip.alphabet = alphabet == "paper" ? Alphabet::paper() : Alphabet::toy();
      corpus.noise_kinds.clear();
      std::stringstream ss(noise_list);
      for (std::string k; std::getline(ss, k, ',');) corpus.noise_kinds.push_back(parse_noise_kind(k));
      if (corpus.min_chars > corpus.max_chars) throw std::invalid_argument("--min-chars exceeds --max-chars");
      return cmd_synth(corpus, corpus_out, out);
    }
    if (*pretrain) return cmd_pretrain(pre_args, seed_flag, workers, out);
    if (*finetune) return cmd_finetune(ft_args, seed_flag, workers, out);
    if (*eval) return cmd_eval(eval_ckpt, eval_manifest, eval_metrics, eval_buckets, workers, out);
    if (*enhance_cmd) return cmd_enhance(enh_ckpt, enh_in, enh_out, out);
    if (*landscape) return cmd_landscape(land, workers, out);
    if (*layerdist) return cmd_layerdist(ld_ckpt, ld_manifest, ld_out, workers, out);
    if (*gradcheck_cmd) return cmd_gradcheck(out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace sslse
