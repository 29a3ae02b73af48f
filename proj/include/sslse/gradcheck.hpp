#pragma once

// Finite-difference verification of analytic gradients. Graphs are rebuilt
// in double precision and perturbed with a five-point central stencil.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sslse/rng.hpp"
#include "sslse/tensor.hpp"

namespace sslse {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// `f` builds a scalar loss from `inputs` (leaves with requires_grad set).
/// At most `max_per_tensor` randomly chosen entries of each input are probed
/// (0 probes everything).
template <class Fn>
GradCheckResult gradcheck(Fn&& f, const std::vector<Tensor<double>>& inputs, std::size_t max_per_tensor = 0,
                          double step = 1e-4, std::uint64_t seed = 7) {
  for (auto t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    Tensor<double> loss = f();
    tape.backward(loss);
  }
  for (auto t : inputs) {
    analytic.emplace_back(t.grad().begin(), t.grad().end());
    t.zero_grad();
  }

  auto eval = [&]() {
    NoGradScope<double> no_grad;
    return f().item();
  };

  GradCheckResult result;
  Rng rng(seed);
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto t = inputs[ti];
    std::vector<std::size_t> probe;
    if (max_per_tensor == 0 || max_per_tensor >= t.size()) {
      for (std::size_t i = 0; i < t.size(); ++i) probe.push_back(i);
    } else {
      probe = rng.sample_without_replacement(t.size(), max_per_tensor);
    }
    for (std::size_t i : probe) {
      const double orig = t[i];
      auto at = [&](double delta) {
        t[i] = orig + delta;
        return eval();
      };
      const double numeric =
          (-at(2 * step) + 8 * at(step) - 8 * at(-step) + at(-2 * step)) / (12 * step);
      t[i] = orig;
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[ti][i], numeric));
      ++result.checked;
    }
  }
  return result;
}

}  // namespace sslse
