#pragma once

// CTC loss (log-space forward-backward), greedy decoding, and edit-distance
// error rates.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sslse/ops.hpp"

namespace sslse {

/// Output symbols of the recognizer. Index 0 is the CTC blank.
class Vocabulary {
 public:
  static constexpr std::size_t kBlank = 0;

  /// Blank followed by one token per character of `alphabet`, plus an
  /// unknown token when `with_unknown` is set.
  static Vocabulary from_alphabet(const std::string& alphabet, bool with_unknown = false) {
    Vocabulary v;
    v.chars_ = alphabet;
    v.has_unknown_ = with_unknown;
    for (std::size_t i = 0; i < alphabet.size(); ++i)
      if (alphabet.find(alphabet[i]) != i) throw std::invalid_argument("vocabulary: duplicate symbol");
    return v;
  }
  static Vocabulary toy() { return from_alphabet("abcdefg "); }
  /// Blank, 26 letters, space, apostrophe and unknown: 30 symbols.
  static Vocabulary paper() { return from_alphabet("abcdefghijklmnopqrstuvwxyz '", true); }

  std::size_t size() const { return 1 + chars_.size() + (has_unknown_ ? 1 : 0); }
  const std::string& alphabet() const { return chars_; }
  std::size_t unknown() const {
    if (!has_unknown_) throw std::logic_error("vocabulary has no unknown token");
    return 1 + chars_.size();
  }

  std::vector<std::size_t> encode(const std::string& text) const {
    std::vector<std::size_t> out;
    for (char c : text) {
      auto pos = chars_.find(c);
      if (pos != std::string::npos) out.push_back(pos + 1);
      else if (has_unknown_) out.push_back(unknown());
      else throw std::invalid_argument(std::string("vocabulary: symbol '") + c + "' not in vocabulary");
    }
    return out;
  }

  std::string decode(const std::vector<std::size_t>& ids) const {
    std::string out;
    for (auto id : ids) {
      if (id == kBlank) continue;
      if (id <= chars_.size()) out += chars_[id - 1];
      else out += '?';
    }
    return out;
  }

 private:
  std::string chars_;
  bool has_unknown_ = false;
};

namespace detail {

inline double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace detail

/// Minimum frame count for `target`: one frame per symbol plus one blank
/// between each pair of equal neighbours.
inline std::size_t ctc_min_frames(const std::vector<std::size_t>& target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

/// −log Σ over alignments of Π_t exp(log_probs[t, π_t]), log_probs [T×V].
/// The gradient with respect to log_probs is minus the alignment occupancy.
template <class T>
Tensor<T> ctc_loss(const Tensor<T>& log_probs, const std::vector<std::size_t>& target,
                   std::size_t blank = Vocabulary::kBlank) {
  if (log_probs.rank() != 2) throw DimensionError("ctc_loss: expected [T x V] log-probabilities");
  const std::size_t frames = log_probs.dim(0), vocab = log_probs.dim(1);
  for (auto s : target)
    if (s >= vocab || s == blank) throw std::invalid_argument("ctc_loss: target symbol out of range or blank");
  if (frames < ctc_min_frames(target) || frames == 0)
    throw std::invalid_argument("ctc_loss: target needs " + std::to_string(ctc_min_frames(target)) +
                                " frames but only " + std::to_string(frames) + " are available");
  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> ext{blank};
  for (auto s : target) {
    ext.push_back(s);
    ext.push_back(blank);
  }
  const std::size_t S = ext.size();
  auto lp = [&](std::size_t t, std::size_t s) { return static_cast<double>(log_probs[t * vocab + ext[s]]); };
  auto can_skip = [&](std::size_t s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  std::vector<double> alpha(frames * S, ninf), beta(frames * S, ninf);
  alpha[0] = lp(0, 0);
  if (S > 1) alpha[1] = lp(0, 1);
  for (std::size_t t = 1; t < frames; ++t)
    for (std::size_t s = 0; s < S; ++s) {
      double a = alpha[(t - 1) * S + s];
      if (s >= 1) a = detail::log_add(a, alpha[(t - 1) * S + s - 1]);
      if (can_skip(s)) a = detail::log_add(a, alpha[(t - 1) * S + s - 2]);
      alpha[t * S + s] = a == ninf ? ninf : a + lp(t, s);
    }
  const std::size_t last = frames - 1;
  beta[last * S + S - 1] = lp(last, S - 1);
  if (S > 1) beta[last * S + S - 2] = lp(last, S - 2);
  for (std::size_t t = last; t-- > 0;)
    for (std::size_t s = 0; s < S; ++s) {
      double b = beta[(t + 1) * S + s];
      if (s + 1 < S) b = detail::log_add(b, beta[(t + 1) * S + s + 1]);
      if (s + 2 < S && can_skip(s + 2)) b = detail::log_add(b, beta[(t + 1) * S + s + 2]);
      beta[t * S + s] = b == ninf ? ninf : b + lp(t, s);
    }
  double log_p = alpha[last * S + S - 1];
  if (S > 1) log_p = detail::log_add(log_p, alpha[last * S + S - 2]);
  if (log_p == ninf) throw std::domain_error("ctc_loss: target has zero probability");

  // occupancy[t, k] = Σ_{s: ext[s]=k} α_t(s)·β_t(s) / (y_t(k)·P)
  std::vector<T> occupancy(frames * vocab, T(0));
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t s = 0; s < S; ++s) {
      const double a = alpha[t * S + s], b = beta[t * S + s];
      if (a == ninf || b == ninf) continue;
      occupancy[t * vocab + ext[s]] += static_cast<T>(std::exp(a + b - lp(t, s) - log_p));
    }
  return detail::make_result<T>(Shape{}, {static_cast<T>(-log_p)}, {&log_probs},
                                [log_probs, occupancy](detail::Node<T>& o) {
                                  auto g = detail::sink(log_probs);
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[0] * occupancy[i];
                                });
}

/// Per-frame argmax, adjacent repeats merged, blanks dropped.
template <class T>
std::vector<std::size_t> greedy_decode(const Tensor<T>& log_probs, std::size_t blank = Vocabulary::kBlank) {
  if (log_probs.rank() != 2) throw DimensionError("greedy_decode: expected [T x V] scores");
  const std::size_t frames = log_probs.dim(0), vocab = log_probs.dim(1);
  std::vector<std::size_t> out;
  std::size_t prev = blank;
  for (std::size_t t = 0; t < frames; ++t) {
    auto row = log_probs.data().subspan(t * vocab, vocab);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best != blank && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

template <class Tok>
std::size_t edit_distance(const std::vector<Tok>& ref, const std::vector<Tok>& hyp) {
  std::vector<std::size_t> row(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (ref[i - 1] == hyp[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[hyp.size()];
}

/// Levenshtein(ref, hyp) / |ref|.
template <class Tok>
double error_rate(const std::vector<Tok>& ref, const std::vector<Tok>& hyp) {
  if (ref.empty()) throw std::invalid_argument("error_rate: empty reference");
  return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

inline std::vector<std::string> words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

inline std::vector<char> chars(const std::string& s) { return {s.begin(), s.end()}; }

inline double cer(const std::string& ref, const std::string& hyp) { return error_rate(chars(ref), chars(hyp)); }
inline double wer(const std::string& ref, const std::string& hyp) { return error_rate(words(ref), words(hyp)); }

}  // namespace sslse
