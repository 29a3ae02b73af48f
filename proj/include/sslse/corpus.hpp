#pragma once

// Deterministic synthetic corpus: every character renders as a two-tone
// chord, noise comes in stationary (white, filtered) and non-stationary
// (amplitude-modulated hum) flavours, and pairs are mixed at uniformly drawn
// SNRs. Output is WAV pairs plus a manifest CSV.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sslse/parallel.hpp"
#include "sslse/rng.hpp"
#include "sslse/signal.hpp"
#include "sslse/wav.hpp"

namespace sslse {

enum class NoiseKind { White, Filtered, Hum };

inline std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::White: return "white";
    case NoiseKind::Filtered: return "filtered";
    case NoiseKind::Hum: return "hum";
  }
  return "?";
}

inline NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "white") return NoiseKind::White;
  if (s == "filtered") return NoiseKind::Filtered;
  if (s == "hum") return NoiseKind::Hum;
  if (s == "none") return NoiseKind::White;  // clean split rows carry no noise
  throw std::invalid_argument("unknown noise kind '" + s + "'");
}

/// Renderable transcript symbols. The toy set has eight symbols; the full
/// set covers letters, space and apostrophe (blank and unknown live only in
/// the recognizer vocabulary).
struct Alphabet {
  std::string symbols;

  static Alphabet toy() { return {"abcdefg "}; }
  static Alphabet paper() { return {"abcdefghijklmnopqrstuvwxyz '"}; }

  std::size_t size() const { return symbols.size(); }
  std::size_t index_of(char c) const {
    auto pos = symbols.find(c);
    return pos == std::string::npos ? std::string::npos : pos;
  }
  bool contains(char c) const { return symbols.find(c) != std::string::npos; }
};

struct ClipConfig {
  std::uint32_t sample_rate = 8000;
  double char_ms = 40.0;
  double ramp_ms = 5.0;
  Alphabet alphabet = Alphabet::toy();

  std::size_t segment_samples() const {
    return static_cast<std::size_t>(std::lround(char_ms * sample_rate / 1000.0));
  }
  /// Tones sit on multiples of this spacing. The default sample_rate/20
  /// makes every chord repeat once per 20 samples (the toy encoder hop), so
  /// all frames inside one symbol see the same waveform. The spacing is
  /// halved until every symbol gets its own fundamental below 0.45·rate.
  double tone_grid_hz() const {
    double grid = sample_rate / 20.0;
    while (grid * static_cast<double>(alphabet.size() + 1) > 0.45 * sample_rate) grid /= 2;
    return grid;
  }
  /// Fundamental (louder, unique per symbol) and second tone for symbol `i`.
  std::pair<double, double> chord(std::size_t i) const {
    const std::size_t n = alphabet.size();
    const double grid = tone_grid_hz();
    return {grid * static_cast<double>(i + 1), grid * static_cast<double>((i + n / 2) % n + 1)};
  }
};

/// Renders `transcript` to a PCM-grid waveform, one chord segment per symbol.
inline Waveform gen_clean(const std::string& transcript, std::uint64_t seed, const ClipConfig& cfg = {}) {
  std::string unknown;
  for (char c : transcript)
    if (!cfg.alphabet.contains(c) && unknown.find(c) == std::string::npos) unknown += c;
  if (!unknown.empty()) throw std::invalid_argument("gen_clean: characters not in alphabet: '" + unknown + "'");
  if (transcript.empty()) throw std::invalid_argument("gen_clean: empty transcript");

  const std::size_t seg = cfg.segment_samples();
  const std::size_t ramp = std::min(seg / 2, static_cast<std::size_t>(std::lround(cfg.ramp_ms * cfg.sample_rate / 1000.0)));
  Waveform out(seg * transcript.size());
  Rng rng(seed);
  for (std::size_t p = 0; p < transcript.size(); ++p) {
    const std::size_t sym = cfg.alphabet.index_of(transcript[p]);
    const auto [f1, f2] = cfg.chord(sym);
    // phases are fixed per symbol, so a symbol always yields the same frames
    const double ph1 = 0.7 * static_cast<double>(sym), ph2 = 1.3 * static_cast<double>(sym);
    const double gain = rng.uniform(0.9, 1.1);
    for (std::size_t n = 0; n < seg; ++n) {
      const double t = static_cast<double>(n) / cfg.sample_rate;
      double env = 1.0;
      if (ramp > 0) {
        if (n < ramp) env = static_cast<double>(n) / ramp;
        else if (n >= seg - ramp) env = static_cast<double>(seg - 1 - n) / ramp;
      }
      const double v = 0.16 * std::sin(2 * M_PI * f1 * t + ph1) + 0.08 * std::sin(2 * M_PI * f2 * t + ph2);
      out[p * seg + n] = snap_to_pcm(gain * env * v);
    }
  }
  return out;
}

/// Unit-RMS noise of the requested kind.
inline Waveform gen_noise(NoiseKind kind, std::size_t length, std::uint64_t seed, std::uint32_t sample_rate = 8000) {
  if (length == 0) throw std::invalid_argument("gen_noise: length must be positive");
  Rng rng(seed);
  std::vector<double> v(length);
  switch (kind) {
    case NoiseKind::White:
      for (auto& x : v) x = rng.normal();
      break;
    case NoiseKind::Filtered: {
      double state = 0;
      for (auto& x : v) {
        state = 0.9 * state + 0.1 * rng.normal();
        x = state;
      }
      break;
    }
    case NoiseKind::Hum: {
      const double f0 = 50.0;
      const double am_rate = rng.uniform(0.5, 3.0), am_phase = rng.uniform(0, 2 * M_PI);
      std::vector<double> phases(12);
      for (auto& ph : phases) ph = rng.uniform(0, 2 * M_PI);
      for (std::size_t n = 0; n < length; ++n) {
        const double t = static_cast<double>(n) / sample_rate;
        double s = 0;
        for (std::size_t h = 1; h <= phases.size(); ++h) {
          if (f0 * h >= sample_rate / 2.0) break;
          s += std::sin(2 * M_PI * f0 * h * t + phases[h - 1]) / h;
        }
        v[n] = (1.0 + 0.6 * std::sin(2 * M_PI * am_rate * t + am_phase)) * s + 0.05 * rng.normal();
      }
      break;
    }
  }
  double p = 0;
  for (double x : v) p += x * x;
  const double k = 1.0 / std::sqrt(p / static_cast<double>(length));
  Waveform out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = static_cast<float>(v[i] * k);
  return out;
}

// ------------------------------------------------------------------ manifest

struct Utterance {
  std::string id;
  std::string transcript;
  std::string clean_path;  // relative to the manifest directory unless absolute
  std::string noisy_path;
  double snr_db = 0.0;     // +inf marks a clean (unmixed) row
  std::string noise_kind;  // "none" for clean rows
  std::uint64_t seed = 0;

  bool is_clean() const { return std::isinf(snr_db); }
};

struct Manifest {
  std::string split;
  std::filesystem::path base_dir;
  std::vector<Utterance> rows;

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
};

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline const char* kManifestHeader = "id,transcript,clean_path,noisy_path,snr_db,noise_kind,seed";

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << kManifestHeader << '\n';
  for (const auto& u : m.rows)
    f << detail::csv_field(u.id) << ',' << detail::csv_field(u.transcript) << ',' << detail::csv_field(u.clean_path)
      << ',' << detail::csv_field(u.noisy_path) << ',' << format_double(u.snr_db) << ',' << u.noise_kind << ','
      << u.seed << '\n';
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  if (!std::getline(f, line) || detail::csv_split(line) != detail::csv_split(kManifestHeader))
    throw std::runtime_error(path.string() + ": missing or malformed header row");
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cols = detail::csv_split(line);
    if (cols.size() != 7)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 7 columns");
    Utterance u;
    u.id = cols[0];
    u.transcript = cols[1];
    u.clean_path = cols[2];
    u.noisy_path = cols[3];
    u.snr_db = cols[4] == "inf" ? std::numeric_limits<double>::infinity() : std::stod(cols[4]);
    u.noise_kind = cols[5];
    u.seed = std::stoull(cols[6]);
    m.rows.push_back(std::move(u));
  }
  for (std::size_t i = 0; i < m.rows.size(); ++i)
    for (std::size_t j = i + 1; j < m.rows.size(); ++j)
      if (m.rows[i].id == m.rows[j].id) throw std::runtime_error(path.string() + ": duplicate id " + m.rows[i].id);
  if (!m.rows.empty()) m.split = m.rows[0].id.substr(0, m.rows[0].id.find('-'));
  return m;
}

// -------------------------------------------------------------------- corpus

struct CorpusConfig {
  std::string split = "pretrain";
  std::size_t count = 32;
  std::size_t min_chars = 25;  // 25..50 symbols at 40 ms gives 1-2 s clips
  std::size_t max_chars = 50;
  double snr_min_db = 0.0;
  double snr_max_db = 25.0;
  bool clean_only = false;  // clean evaluation split: no mixing, snr = +inf
  std::vector<NoiseKind> noise_kinds = {NoiseKind::White, NoiseKind::Filtered, NoiseKind::Hum};
  double noise_margin_s = 0.5;  // extra noise length to crop from
  ClipConfig clip;
  std::uint64_t seed = 1;
  unsigned workers = 1;
};

/// Random transcript: no leading, trailing or doubled spaces.
inline std::string random_transcript(std::size_t length, const Alphabet& alphabet, Rng& rng) {
  std::string letters;
  for (char c : alphabet.symbols)
    if (c != ' ') letters += c;
  const bool has_space = alphabet.contains(' ');
  std::string out;
  while (out.size() < length) {
    const bool edge = out.empty() || out.size() + 1 == length || out.back() == ' ';
    if (has_space && !edge && rng.bernoulli(0.2)) out += ' ';
    else out += letters[rng.index(letters.size())];
  }
  return out;
}

struct GeneratedPair {
  Utterance row;
  Waveform clean, noisy;
};

inline GeneratedPair generate_row(const CorpusConfig& cfg, std::size_t index) {
  GeneratedPair g;
  auto& u = g.row;
  char id[64];
  std::snprintf(id, sizeof id, "%s-%05zu", cfg.split.c_str(), index);
  u.id = id;
  u.seed = derive_seed(cfg.seed, derive_seed(std::hash<std::string>{}(cfg.split) & 0xFFFFFFFF, index));
  Rng rng(u.seed);
  const std::size_t len = cfg.min_chars + rng.index(cfg.max_chars - cfg.min_chars + 1);
  u.transcript = random_transcript(len, cfg.clip.alphabet, rng);
  g.clean = gen_clean(u.transcript, derive_seed(u.seed, "clean"), cfg.clip);
  u.clean_path = "clean/" + u.id + ".wav";
  if (cfg.clean_only) {
    u.snr_db = std::numeric_limits<double>::infinity();
    u.noise_kind = "none";
    u.noisy_path = u.clean_path;
    g.noisy = g.clean;
    return g;
  }
  const NoiseKind kind = cfg.noise_kinds[rng.index(cfg.noise_kinds.size())];
  u.noise_kind = to_string(kind);
  u.snr_db = rng.uniform(cfg.snr_min_db, cfg.snr_max_db);
  const std::size_t margin = static_cast<std::size_t>(cfg.noise_margin_s * cfg.clip.sample_rate);
  auto noise = gen_noise(kind, g.clean.size() + margin, derive_seed(u.seed, "noise"), cfg.clip.sample_rate);
  Rng mix_rng(derive_seed(u.seed, "mix"));
  auto mix = mix_at_snr(g.clean, noise, u.snr_db, mix_rng);
  for (float v : mix.noisy)
    if (v >= 1.0f || v < -1.0f) throw std::runtime_error(u.id + ": mixture clips at " + format_double(u.snr_db) + " dB");
  g.noisy = std::move(mix.noisy);
  u.noisy_path = "noisy/" + u.id + ".wav";
  return g;
}

/// Writes `<out_dir>/{clean,noisy}/<id>.wav` and `<out_dir>/manifest.csv`.
inline Manifest build_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.min_chars == 0 || cfg.max_chars < cfg.min_chars)
    throw std::invalid_argument("build_corpus: need 1 <= min_chars <= max_chars");
  if (cfg.noise_kinds.empty() && !cfg.clean_only) throw std::invalid_argument("build_corpus: no noise kinds");
  std::error_code ec;
  for (const char* sub : {"clean", "noisy"}) {
    std::filesystem::create_directories(out_dir / sub, ec);
    if (ec) throw std::runtime_error("cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }
  Manifest m;
  m.split = cfg.split;
  m.base_dir = out_dir;
  m.rows.resize(cfg.count);
  parallel_for(cfg.count, cfg.workers, [&](std::size_t i) {
    auto g = generate_row(cfg, i);
    write_wav(out_dir / g.row.clean_path, {cfg.clip.sample_rate, g.clean});
    if (!cfg.clean_only) write_wav(out_dir / g.row.noisy_path, {cfg.clip.sample_rate, g.noisy});
    m.rows[i] = std::move(g.row);
  });
  write_manifest(out_dir / "manifest.csv", m);
  return m;
}

struct LoadedPair {
  Waveform clean, noisy;
};

inline LoadedPair load_pair(const Manifest& m, const Utterance& u) {
  LoadedPair p;
  p.clean = read_wav(m.resolve(u.clean_path)).samples;
  p.noisy = u.noisy_path == u.clean_path ? p.clean : read_wav(m.resolve(u.noisy_path)).samples;
  return p;
}

}  // namespace sslse
