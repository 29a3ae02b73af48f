#pragma once

// Named parameter lists shared by every module: init, flattening, casting.

#include <cmath>
#include <string>
#include <vector>

#include "sslse/rng.hpp"
#include "sslse/tensor.hpp"

namespace sslse {

template <class T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

template <class T>
using ParamList = std::vector<NamedParam<T>>;

/// Trainable tensor initialized uniformly in ±1/sqrt(fan_in).
template <class T>
Tensor<T> init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape), true);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <class T>
Tensor<T> init_normal(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape), true);
  for (auto& v : t.values()) v = static_cast<T>(stddev * rng.normal());
  return t;
}

template <class T>
Tensor<T> init_const(Shape shape, T value) {
  return Tensor<T>::full(std::move(shape), value, true);
}

template <class T>
void append(ParamList<T>& out, const std::string& prefix, const ParamList<T>& more) {
  for (const auto& p : more) out.push_back({prefix + p.name, p.tensor});
}

template <class T>
void zero_grads(const ParamList<T>& params) {
  for (auto p : params) p.tensor.zero_grad();
}

template <class T>
std::size_t total_size(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

template <class T>
std::vector<double> flatten(const ParamList<T>& params) {
  std::vector<double> out;
  out.reserve(total_size(params));
  for (const auto& p : params) out.insert(out.end(), p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

template <class T>
void unflatten(const ParamList<T>& params, const std::vector<double>& flat) {
  if (flat.size() != total_size(params))
    throw DimensionError("unflatten: " + std::to_string(flat.size()) + " values for " +
                         std::to_string(total_size(params)) + " parameters");
  std::size_t k = 0;
  for (auto p : params)
    for (auto& v : p.tensor.values()) v = static_cast<T>(flat[k++]);
}

/// Copies values between two lists with identical names and shapes.
template <class T, class U>
void copy_values(const ParamList<T>& from, const ParamList<U>& to) {
  if (from.size() != to.size()) throw DimensionError("copy_values: parameter count mismatch");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].name != to[i].name || from[i].tensor.shape() != to[i].tensor.shape())
      throw DimensionError("copy_values: mismatch at " + from[i].name);
    auto dst = to[i].tensor;
    std::copy(from[i].tensor.values().begin(), from[i].tensor.values().end(), dst.values().begin());
  }
}

}  // namespace sslse
