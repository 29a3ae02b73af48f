#pragma once

// Multi-head scaled dot-product attention and the two ways of combining
// enhanced and noisy feature streams: cross-attention in both directions,
// or concatenation followed by a projection.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sslse/ops.hpp"
#include "sslse/params.hpp"

namespace sslse {

template <class T>
struct MultiheadParams {
  std::size_t heads = 1;
  Tensor<T> wq, wk, wv;  // [d × d]; head h uses columns [h·d_k, (h+1)·d_k)
  Tensor<T> wo;          // [d × d]

  MultiheadParams() = default;
  MultiheadParams(std::size_t dim, std::size_t h, Rng& rng) : heads(h) {
    if (h == 0 || dim % h != 0)
      throw std::invalid_argument("attention: dim " + std::to_string(dim) + " not divisible by " +
                                  std::to_string(h) + " heads");
    wq = init_uniform<T>({dim, dim}, dim, rng);
    wk = init_uniform<T>({dim, dim}, dim, rng);
    wv = init_uniform<T>({dim, dim}, dim, rng);
    wo = init_uniform<T>({dim, dim}, dim, rng);
  }

  ParamList<T> parameters() const { return {{"wq", wq}, {"wk", wk}, {"wv", wv}, {"wo", wo}}; }
};

/// Attention of queries z_q [Tq×d] over keys z_k and values z_v [Tk×d].
/// If `weights` is given, each head's [Tq×Tk] attention matrix is appended.
template <class T>
Tensor<T> multihead(const Tensor<T>& z_q, const Tensor<T>& z_k, const Tensor<T>& z_v, const MultiheadParams<T>& p,
                    std::vector<Tensor<T>>* weights = nullptr) {
  for (const auto* z : {&z_q, &z_k, &z_v})
    if (z->rank() != 2 || z->dim(1) != p.wq.dim(0))
      throw DimensionError("multihead: expected [T x " + std::to_string(p.wq.dim(0)) + "] inputs, got " +
                           shape_str(z->shape()));
  if (z_k.dim(0) != z_v.dim(0))
    throw DimensionError("multihead: keys have " + std::to_string(z_k.dim(0)) + " frames but values have " +
                         std::to_string(z_v.dim(0)));
  const std::size_t d = p.wq.dim(0), dk = d / p.heads;
  auto q = matmul(z_q, p.wq);
  auto k = matmul(z_k, p.wk);
  auto v = matmul(z_v, p.wv);
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
  std::vector<Tensor<T>> outs;
  for (std::size_t h = 0; h < p.heads; ++h) {
    auto qh = slice_cols(q, h * dk, dk);
    auto kh = slice_cols(k, h * dk, dk);
    auto vh = slice_cols(v, h * dk, dk);
    auto a = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt));
    if (weights) weights->push_back(a);
    outs.push_back(matmul(a, vh));
  }
  return matmul(p.heads == 1 ? outs[0] : concat(outs, 1), p.wo);
}

template <class T>
struct LinearParams {
  Tensor<T> w, b;  // [in × out], [out]

  LinearParams() = default;
  LinearParams(std::size_t in, std::size_t out, Rng& rng)
      : w(init_uniform<T>({in, out}, in, rng)), b(init_uniform<T>({out}, in, rng)) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, w, b); }
  ParamList<T> parameters() const { return {{"weight", w}, {"bias", b}}; }
};

template <class T>
struct DualAttentionParams {
  MultiheadParams<T> en_queries;     // enhanced queries attend over noisy
  MultiheadParams<T> noisy_queries;  // noisy queries attend over enhanced
  LinearParams<T> en_out, noisy_out;

  DualAttentionParams() = default;
  DualAttentionParams(std::size_t dim, std::size_t heads, Rng& rng)
      : en_queries(dim, heads, rng), noisy_queries(dim, heads, rng), en_out(dim, dim, rng), noisy_out(dim, dim, rng) {}

  ParamList<T> parameters() const {
    ParamList<T> out;
    append(out, "en_queries.", en_queries.parameters());
    append(out, "noisy_queries.", noisy_queries.parameters());
    append(out, "en_out.", en_out.parameters());
    append(out, "noisy_out.", noisy_out.parameters());
    return out;
  }
};

namespace detail {
template <class T>
void require_pair(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": enhanced " + shape_str(a.shape()) + " and noisy " +
                         shape_str(b.shape()) + " features differ");
}
}  // namespace detail

/// Linear(MH(z_en, z_noisy, z_noisy)) + Linear(MH(z_noisy, z_en, z_en)).
template <class T>
Tensor<T> fuse_dual_attention(const Tensor<T>& z_en, const Tensor<T>& z_noisy, const DualAttentionParams<T>& p) {
  detail::require_pair(z_en, z_noisy, "fuse_dual_attention");
  auto left = p.en_out(multihead(z_en, z_noisy, z_noisy, p.en_queries));
  auto right = p.noisy_out(multihead(z_noisy, z_en, z_en, p.noisy_queries));
  return add(left, right);
}

/// [z_en | z_noisy] projected from 2d back to d.
template <class T>
Tensor<T> fuse_concat(const Tensor<T>& z_en, const Tensor<T>& z_noisy, const LinearParams<T>& proj) {
  detail::require_pair(z_en, z_noisy, "fuse_concat");
  return proj(concat(std::vector<Tensor<T>>{z_en, z_noisy}, 1));
}

}  // namespace sslse
