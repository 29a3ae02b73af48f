#pragma once

// Adam with linear learning-rate warmup.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sslse/params.hpp"

namespace sslse {

struct AdamConfig {
  double lr = 1e-3;
  std::size_t warmup = 100;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;

  /// Rate used for update number `step` (0-based).
  double rate(std::uint64_t step) const {
    if (warmup == 0) return lr;
    return lr * std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(warmup));
  }
};

template <class T>
class Adam {
 public:
  AdamConfig cfg;
  std::uint64_t steps = 0;
  std::map<std::string, std::vector<double>> m, v;  // keyed by parameter name

  explicit Adam(AdamConfig c = {}) : cfg(c) {}

  /// Applies one update from the accumulated gradients of `params`;
  /// parameters named in `frozen_prefixes` are skipped.
  void step(const ParamList<T>& params, const std::vector<std::string>& frozen_prefixes = {}) {
    const double lr = cfg.rate(steps);
    ++steps;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(steps));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(steps));
    for (auto p : params) {
      bool frozen = false;
      for (const auto& prefix : frozen_prefixes) frozen = frozen || p.name.rfind(prefix, 0) == 0;
      if (frozen || !p.tensor.has_grad()) continue;
      auto& mm = m[p.name];
      auto& vv = v[p.name];
      if (mm.empty()) {
        mm.assign(p.tensor.size(), 0.0);
        vv.assign(p.tensor.size(), 0.0);
      }
      auto g = p.tensor.grad();
      auto w = p.tensor.data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i];
        mm[i] = cfg.beta1 * mm[i] + (1 - cfg.beta1) * gi;
        vv[i] = cfg.beta2 * vv[i] + (1 - cfg.beta2) * gi * gi;
        const double update = lr * (mm[i] / bc1) / (std::sqrt(vv[i] / bc2) + cfg.eps);
        w[i] = static_cast<T>(w[i] - update);
      }
    }
  }
};

}  // namespace sslse
