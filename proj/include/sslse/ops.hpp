#pragma once

// Differentiable primitives. Matrices are rank-2 row-major tensors; the only
// implicit broadcast is rank-0 scalar against a tensor. Row/column vector
// broadcasts are separate named ops.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "sslse/tensor.hpp"

namespace sslse {

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

template <class T>
void require_matrix(const Tensor<T>& x, const char* op) {
  require(x.rank() == 2, std::string(op) + ": expected a matrix, got " + shape_str(x.shape()));
}

template <class T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

template <class T, class F, class G>
Tensor<T> unary(const Tensor<T>& x, F f, G dfdx) {
  std::vector<T> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result<T>(x.shape(), std::move(out), {&x}, [x, dfdx](Node<T>& o) {
    auto gx = sink(x);
    if (gx.empty()) return;
    auto xv = x.data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i] * dfdx(xv[i], o.value[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) {
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [a, b](detail::Node<T>& o) {
      for (const auto* t : {&a, &b}) {
        auto g = detail::sink(*t);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
      }
    });
  }
  if (b.rank() == 0) {
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[0];
    return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [a, b](detail::Node<T>& o) {
      auto ga = detail::sink(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
      auto gb = detail::sink(b);
      if (!gb.empty())
        for (T g : o.grad) gb[0] += g;
    });
  }
  if (a.rank() == 0) return add(b, a);
  throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) {
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [a, b](detail::Node<T>& o) {
      auto ga = detail::sink(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * b[i];
      auto gb = detail::sink(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[i] * a[i];
    });
  }
  if (b.rank() == 0) {
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[0];
    return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [a, b](detail::Node<T>& o) {
      auto ga = detail::sink(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * b[0];
      auto gb = detail::sink(b);
      if (!gb.empty())
        for (std::size_t i = 0; i < o.grad.size(); ++i) gb[0] += o.grad[i] * a[i];
    });
  }
  if (a.rank() == 0) return mul(b, a);
  throw DimensionError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  return detail::unary(x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, scale(b, T(-1)));
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return detail::unary(x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return v > T(0) ? v : T(0); },
                       [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return detail::unary(
      x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * T(kInvSqrt2))); },
      [](T v, T) {
        return T(0.5) * (T(1) + std::erf(v * T(kInvSqrt2))) + v * T(kInvSqrt2Pi) * std::exp(-T(0.5) * v * v);
      });
}

template <class T>
T sigmoid_value(T v) {
  return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return sigmoid_value(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

/// Natural log of max(x, floor); the gradient is zero where the floor binds.
template <class T>
Tensor<T> log_floor(const Tensor<T>& x, T floor) {
  return detail::unary(
      x, [floor](T v) { return std::log(v > floor ? v : floor); },
      [floor](T v, T) { return v > floor ? T(1) / v : T(0); });
}

template <class T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

/// |x| with subgradient 0 at the origin.
template <class T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::abs(v); },
                       [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

/// Multiplies by a constant mask of the same shape (no gradient to the mask).
template <class T>
Tensor<T> mul_const(const Tensor<T>& x, const std::vector<T>& mask) {
  detail::require(mask.size() == x.size(), "mul_const: mask size mismatch");
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return detail::make_result<T>(x.shape(), std::move(out), {&x}, [x, mask](detail::Node<T>& o) {
    auto g = detail::sink(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * mask[i];
  });
}

// ----------------------------------------------------------------- reductions

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  return detail::make_result<T>(Shape{}, {s}, {&x}, [x](detail::Node<T>& o) {
    auto g = detail::sink(x);
    for (auto& v : g) v += o.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  detail::require(x.size() > 0, "mean: empty tensor");
  return scale(sum(x), T(1) / T(x.size()));
}

// ------------------------------------------------------------ shape plumbing

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  detail::require(numel(shape) == x.size(),
                  "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  return detail::make_result<T>(std::move(shape), x.values(), {&x}, [x](detail::Node<T>& o) {
    auto g = detail::sink(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& x) {
  detail::require_matrix(x, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return detail::make_result<T>(Shape{c, r}, std::move(out), {&x}, [x, r, c](detail::Node<T>& o) {
    auto g = detail::sink(x);
    if (g.empty()) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
  });
}

/// Concatenates matrices along `axis` (0 = rows, 1 = columns).
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  detail::require(!parts.empty(), "concat: no inputs");
  detail::require(axis <= 1, "concat: axis must be 0 or 1");
  for (const auto& p : parts) detail::require_matrix(p, "concat");
  const std::size_t other = 1 - axis;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require(p.dim(other) == parts[0].dim(other),
                    "concat: axis " + std::to_string(other) + " mismatch " + shape_str(p.shape()) +
                        " vs " + shape_str(parts[0].shape()));
    total += p.dim(axis);
  }
  const std::size_t rows = axis == 0 ? total : parts[0].dim(0);
  const std::size_t cols = axis == 1 ? total : parts[0].dim(1);
  std::vector<T> out(rows * cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t pr = p.dim(0), pc = p.dim(1);
    for (std::size_t i = 0; i < pr; ++i)
      for (std::size_t j = 0; j < pc; ++j) {
        const std::size_t r = axis == 0 ? i + offset : i;
        const std::size_t c = axis == 1 ? j + offset : j;
        out[r * cols + c] = p[i * pc + j];
      }
    offset += p.dim(axis);
  }
  return detail::make_result<T>(Shape{rows, cols}, std::move(out), parts,
                                [parts, axis, cols](detail::Node<T>& o) {
                                  std::size_t offset = 0;
                                  for (const auto& p : parts) {
                                    auto g = detail::sink(p);
                                    const std::size_t pr = p.dim(0), pc = p.dim(1);
                                    if (!g.empty())
                                      for (std::size_t i = 0; i < pr; ++i)
                                        for (std::size_t j = 0; j < pc; ++j) {
                                          const std::size_t r = axis == 0 ? i + offset : i;
                                          const std::size_t c = axis == 1 ? j + offset : j;
                                          g[i * pc + j] += o.grad[r * cols + c];
                                        }
                                    offset += p.dim(axis);
                                  }
                                });
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t len) {
  detail::require_matrix(x, "slice_cols");
  const std::size_t r = x.dim(0), c = x.dim(1);
  detail::require(start + len <= c, "slice_cols: axis 1 range [" + std::to_string(start) + ", " +
                                        std::to_string(start + len) + ") exceeds " + std::to_string(c));
  std::vector<T> out(r * len);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < len; ++j) out[i * len + j] = x[i * c + start + j];
  return detail::make_result<T>(Shape{r, len}, std::move(out), {&x},
                                [x, start, len, r, c](detail::Node<T>& o) {
                                  auto g = detail::sink(x);
                                  if (g.empty()) return;
                                  for (std::size_t i = 0; i < r; ++i)
                                    for (std::size_t j = 0; j < len; ++j)
                                      g[i * c + start + j] += o.grad[i * len + j];
                                });
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t start, std::size_t len) {
  detail::require_matrix(x, "slice_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  detail::require(start + len <= r, "slice_rows: axis 0 range [" + std::to_string(start) + ", " +
                                        std::to_string(start + len) + ") exceeds " + std::to_string(r));
  std::vector<T> out(x.values().begin() + static_cast<std::ptrdiff_t>(start * c),
                     x.values().begin() + static_cast<std::ptrdiff_t>((start + len) * c));
  return detail::make_result<T>(Shape{len, c}, std::move(out), {&x}, [x, start, c](detail::Node<T>& o) {
    auto g = detail::sink(x);
    if (g.empty()) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[start * c + i] += o.grad[i];
  });
}

/// Rows of `x` selected by `idx` (duplicates allowed).
template <class T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& idx) {
  detail::require_matrix(x, "gather_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<T> out(idx.size() * c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    detail::require(idx[i] < r, "gather_rows: axis 0 index out of range");
    std::copy_n(x.values().begin() + static_cast<std::ptrdiff_t>(idx[i] * c), c, out.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return detail::make_result<T>(Shape{idx.size(), c}, std::move(out), {&x}, [x, idx, c](detail::Node<T>& o) {
    auto g = detail::sink(x);
    if (g.empty()) return;
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) g[idx[i] * c + j] += o.grad[i * c + j];
  });
}

/// out[i, j] = x[i, idx[i][j]]; every row selects the same number of entries.
template <class T>
Tensor<T> gather_per_row(const Tensor<T>& x, const std::vector<std::vector<std::size_t>>& idx) {
  detail::require_matrix(x, "gather_per_row");
  const std::size_t r = x.dim(0), c = x.dim(1);
  detail::require(idx.size() == r, "gather_per_row: axis 0 mismatch");
  const std::size_t k = r ? idx[0].size() : 0;
  std::vector<T> out(r * k);
  for (std::size_t i = 0; i < r; ++i) {
    detail::require(idx[i].size() == k, "gather_per_row: ragged index rows");
    for (std::size_t j = 0; j < k; ++j) {
      detail::require(idx[i][j] < c, "gather_per_row: axis 1 index out of range");
      out[i * k + j] = x[i * c + idx[i][j]];
    }
  }
  return detail::make_result<T>(Shape{r, k}, std::move(out), {&x}, [x, idx, c, k](detail::Node<T>& o) {
    auto g = detail::sink(x);
    if (g.empty()) return;
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < k; ++j) g[i * c + idx[i][j]] += o.grad[i * k + j];
  });
}

/// Replaces the rows flagged in `mask` by the row vector `row` (shape [C]).
template <class T>
Tensor<T> replace_rows(const Tensor<T>& x, const std::vector<bool>& mask, const Tensor<T>& row) {
  detail::require_matrix(x, "replace_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  detail::require(mask.size() == r, "replace_rows: axis 0 mismatch with mask");
  detail::require(row.size() == c, "replace_rows: axis 1 mismatch with replacement row");
  std::vector<T> out = x.values();
  for (std::size_t i = 0; i < r; ++i)
    if (mask[i]) std::copy(row.values().begin(), row.values().end(), out.begin() + static_cast<std::ptrdiff_t>(i * c));
  return detail::make_result<T>(x.shape(), std::move(out), {&x, &row}, [x, row, mask, c](detail::Node<T>& o) {
    auto gx = detail::sink(x);
    auto gr = detail::sink(row);
    for (std::size_t i = 0; i < mask.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) {
        if (mask[i]) {
          if (!gr.empty()) gr[j] += o.grad[i * c + j];
        } else if (!gx.empty()) {
          gx[i * c + j] += o.grad[i * c + j];
        }
      }
  });
}

/// Zero-pads (or crops) the column axis of a matrix to `len`.
template <class T>
Tensor<T> resize_cols(const Tensor<T>& x, std::size_t len) {
  detail::require_matrix(x, "resize_cols");
  const std::size_t r = x.dim(0), c = x.dim(1), keep = std::min(c, len);
  std::vector<T> out(r * len, T(0));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < keep; ++j) out[i * len + j] = x[i * c + j];
  return detail::make_result<T>(Shape{r, len}, std::move(out), {&x}, [x, r, c, len, keep](detail::Node<T>& o) {
    auto g = detail::sink(x);
    if (g.empty()) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < keep; ++j) g[i * c + j] += o.grad[i * len + j];
  });
}

// ------------------------------------------------------ broadcasts & linear

/// x[R×C] + v[C] (v added to every row).
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& v) {
  detail::require_matrix(x, "add_bias");
  const std::size_t r = x.dim(0), c = x.dim(1);
  detail::require(v.size() == c, "add_bias: axis 1 is " + std::to_string(c) + " but bias has " +
                                     std::to_string(v.size()));
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] + v[j];
  return detail::make_result<T>(x.shape(), std::move(out), {&x, &v}, [x, v, r, c](detail::Node<T>& o) {
    auto gx = detail::sink(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i];
    auto gv = detail::sink(v);
    if (!gv.empty())
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gv[j] += o.grad[i * c + j];
  });
}

/// x[R×C] * v[C] (column-wise scaling).
template <class T>
Tensor<T> mul_cols(const Tensor<T>& x, const Tensor<T>& v) {
  detail::require_matrix(x, "mul_cols");
  const std::size_t r = x.dim(0), c = x.dim(1);
  detail::require(v.size() == c, "mul_cols: axis 1 mismatch");
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] * v[j];
  return detail::make_result<T>(x.shape(), std::move(out), {&x, &v}, [x, v, r, c](detail::Node<T>& o) {
    auto gx = detail::sink(x);
    auto gv = detail::sink(v);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        if (!gx.empty()) gx[i * c + j] += o.grad[i * c + j] * v[j];
        if (!gv.empty()) gv[j] += o.grad[i * c + j] * x[i * c + j];
      }
  });
}

/// x[R×C] + v[R] (v[i] added to row i).
template <class T>
Tensor<T> add_rows(const Tensor<T>& x, const Tensor<T>& v) {
  detail::require_matrix(x, "add_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  detail::require(v.size() == r, "add_rows: axis 0 mismatch");
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] + v[i];
  return detail::make_result<T>(x.shape(), std::move(out), {&x, &v}, [x, v, r, c](detail::Node<T>& o) {
    auto gx = detail::sink(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i];
    auto gv = detail::sink(v);
    if (!gv.empty())
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gv[i] += o.grad[i * c + j];
  });
}

/// x[R×C] * v[R] (row-wise scaling).
template <class T>
Tensor<T> mul_rows(const Tensor<T>& x, const Tensor<T>& v) {
  detail::require_matrix(x, "mul_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  detail::require(v.size() == r, "mul_rows: axis 0 mismatch");
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] * v[i];
  return detail::make_result<T>(x.shape(), std::move(out), {&x, &v}, [x, v, r, c](detail::Node<T>& o) {
    auto gx = detail::sink(x);
    auto gv = detail::sink(v);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        if (!gx.empty()) gx[i * c + j] += o.grad[i * c + j] * v[i];
        if (!gv.empty()) gv[i] += o.grad[i * c + j] * x[i * c + j];
      }
  });
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  detail::require(b.dim(0) == k, "matmul: inner axis mismatch " + shape_str(a.shape()) + " x " +
                                     shape_str(b.shape()));
  std::vector<T> out(m * n, T(0));
  const T* A = a.data().data();
  const T* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = A[i * k + p];
      if (av == T(0)) continue;
      const T* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return detail::make_result<T>(Shape{m, n}, std::move(out), {&a, &b}, [a, b, m, k, n](detail::Node<T>& o) {
    const T* G = o.grad.data();
    auto ga = detail::sink(a);
    if (!ga.empty()) {
      const T* B = b.data().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          T s = 0;
          const T* grow = G + i * n;
          const T* brow = B + p * n;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          ga[i * k + p] += s;
        }
    }
    auto gb = detail::sink(b);
    if (!gb.empty()) {
      const T* A = a.data().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T av = A[i * k + p];
          if (av == T(0)) continue;
          T* gbrow = gb.data() + p * n;
          const T* grow = G + i * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
    }
  });
}

/// x[T×in]·W[in×out] + b[out].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return add_bias(matmul(x, w), b);
}

// -------------------------------------------------------- row-wise families

/// Softmax over the last axis of a matrix (or a vector treated as one row).
template <class T>
Tensor<T> softmax(const Tensor<T>& x) {
  detail::require(x.rank() == 1 || x.rank() == 2, "softmax: expected rank 1 or 2");
  const std::size_t c = x.shape().back();
  detail::require(c > 0, "softmax: empty axis");
  const std::size_t r = x.size() / c;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < r; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, x[i * c + j]);
    T s = 0;
    for (std::size_t j = 0; j < c; ++j) s += (out[i * c + j] = std::exp(x[i * c + j] - mx));
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= s;
  }
  return detail::make_result<T>(x.shape(), std::move(out), {&x}, [x, r, c](detail::Node<T>& o) {
    auto g = detail::sink(x);
    if (g.empty()) return;
    for (std::size_t i = 0; i < r; ++i) {
      T dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += o.grad[i * c + j] * o.value[i * c + j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.value[i * c + j] * (o.grad[i * c + j] - dot);
    }
  });
}

template <class T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  detail::require(x.rank() == 1 || x.rank() == 2, "log_softmax: expected rank 1 or 2");
  const std::size_t c = x.shape().back();
  detail::require(c > 0, "log_softmax: empty axis");
  const std::size_t r = x.size() / c;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < r; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, x[i * c + j]);
    T s = 0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(x[i * c + j] - mx);
    const T lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] - lse;
  }
  return detail::make_result<T>(x.shape(), std::move(out), {&x}, [x, r, c](detail::Node<T>& o) {
    auto g = detail::sink(x);
    if (g.empty()) return;
    for (std::size_t i = 0; i < r; ++i) {
      T gs = 0;
      for (std::size_t j = 0; j < c; ++j) gs += o.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        g[i * c + j] += o.grad[i * c + j] - std::exp(o.value[i * c + j]) * gs;
    }
  });
}

/// Per-row standardization (zero mean, unit variance) without affine terms.
template <class T>
Tensor<T> normalize_rows(const Tensor<T>& x, T eps = T(1e-5)) {
  detail::require_matrix(x, "normalize_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  detail::require(c > 0, "normalize_rows: empty axis");
  std::vector<T> out(x.size());
  std::vector<T> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    T mu = 0;
    for (std::size_t j = 0; j < c; ++j) mu += x[i * c + j];
    mu /= T(c);
    T var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (x[i * c + j] - mu) * (x[i * c + j] - mu);
    var /= T(c);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = (x[i * c + j] - mu) * inv_std[i];
  }
  return detail::make_result<T>(x.shape(), std::move(out), {&x}, [x, r, c, inv_std](detail::Node<T>& o) {
    auto g = detail::sink(x);
    if (g.empty()) return;
    for (std::size_t i = 0; i < r; ++i) {
      T gmean = 0, gdot = 0;
      for (std::size_t j = 0; j < c; ++j) {
        gmean += o.grad[i * c + j];
        gdot += o.grad[i * c + j] * o.value[i * c + j];
      }
      gmean /= T(c);
      gdot /= T(c);
      for (std::size_t j = 0; j < c; ++j)
        g[i * c + j] += inv_std[i] * (o.grad[i * c + j] - gmean - o.value[i * c + j] * gdot);
    }
  });
}

/// Layer norm over the last axis with per-feature gain and bias ([C] each).
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias) {
  return add_bias(mul_cols(normalize_rows(x), gain), bias);
}

/// Normalizes each channel of a [C×L] signal over time, then applies a
/// per-channel affine map. This is group norm with one group per channel.
template <class T>
Tensor<T> channel_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias) {
  return add_rows(mul_rows(normalize_rows(x), gain), bias);
}

/// Per-row Euclidean norm, shape [R]. The gradient at a zero row is zero.
template <class T>
Tensor<T> l2_norm(const Tensor<T>& x) {
  detail::require_matrix(x, "l2_norm");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<T> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    T s = 0;
    for (std::size_t j = 0; j < c; ++j) s += x[i * c + j] * x[i * c + j];
    out[i] = std::sqrt(s);
  }
  return detail::make_result<T>(Shape{r}, std::move(out), {&x}, [x, r, c](detail::Node<T>& o) {
    auto g = detail::sink(x);
    if (g.empty()) return;
    for (std::size_t i = 0; i < r; ++i) {
      if (o.value[i] == T(0)) continue;
      const T k = o.grad[i] / o.value[i];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += k * x[i * c + j];
    }
  });
}

/// Scales every row to unit length; rows shorter than `eps` are divided by eps.
template <class T>
Tensor<T> normalize_l2(const Tensor<T>& x, T eps = T(1e-8)) {
  detail::require_matrix(x, "normalize_l2");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<T> out(x.size()), norms(r);
  for (std::size_t i = 0; i < r; ++i) {
    T s = 0;
    for (std::size_t j = 0; j < c; ++j) s += x[i * c + j] * x[i * c + j];
    norms[i] = std::max(std::sqrt(s), eps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] / norms[i];
  }
  return detail::make_result<T>(x.shape(), std::move(out), {&x}, [x, r, c, norms, eps](detail::Node<T>& o) {
    auto g = detail::sink(x);
    if (g.empty()) return;
    for (std::size_t i = 0; i < r; ++i) {
      const T n = norms[i];
      if (n <= eps) {
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[i * c + j] / n;
        continue;
      }
      T dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += o.grad[i * c + j] * o.value[i * c + j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += (o.grad[i * c + j] - o.value[i * c + j] * dot) / n;
    }
  });
}

/// Row-wise cosine similarity of two equally shaped matrices, shape [R].
template <class T>
Tensor<T> cosine_similarity(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a, b, "cosine_similarity");
  auto prod = mul(normalize_l2(a), normalize_l2(b));
  const std::size_t r = a.dim(0), c = a.dim(1);
  auto ones = Tensor<T>::full(Shape{c, 1}, T(1));
  return reshape(matmul(prod, ones), Shape{r});
}

/// Gated linear unit along `axis` of a matrix: first half * sigmoid(second half).
template <class T>
Tensor<T> glu(const Tensor<T>& x, std::size_t axis = 0) {
  detail::require_matrix(x, "glu");
  detail::require(axis <= 1, "glu: axis must be 0 or 1");
  const std::size_t n = x.dim(axis);
  detail::require(n % 2 == 0, "glu: axis " + std::to_string(axis) + " has odd size " + std::to_string(n));
  if (axis == 0) {
    auto a = slice_rows(x, 0, n / 2);
    auto b = slice_rows(x, n / 2, n / 2);
    return mul(a, sigmoid(b));
  }
  auto a = slice_cols(x, 0, n / 2);
  auto b = slice_cols(x, n / 2, n / 2);
  return mul(a, sigmoid(b));
}

/// Forward value of `hard`, gradient routed to `soft` unchanged.
template <class T>
Tensor<T> straight_through(std::vector<T> hard, const Tensor<T>& soft) {
  detail::require(hard.size() == soft.size(), "straight_through: size mismatch");
  return detail::make_result<T>(soft.shape(), std::move(hard), {&soft}, [soft](detail::Node<T>& o) {
    auto g = detail::sink(soft);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

// --------------------------------------------------------------- convolution

inline std::size_t conv_out_len(std::size_t len, std::size_t kernel, std::size_t stride) {
  return len < kernel ? 0 : (len - kernel) / stride + 1;
}

/// input [Cin×L], weight [Cout×Cin×K], bias [Cout] -> [Cout×Lout],
/// Lout = floor((L-K)/stride) + 1.
template <class T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride) {
  detail::require(stride >= 1, "conv1d: stride must be >= 1");
  detail::require(x.rank() == 2, "conv1d: input must be [Cin x L], got " + shape_str(x.shape()));
  detail::require(w.rank() == 3, "conv1d: weight must be [Cout x Cin x K], got " + shape_str(w.shape()));
  const std::size_t cin = x.dim(0), len = x.dim(1);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  detail::require(w.dim(1) == cin, "conv1d: axis 1 (input channels) of weight is " + std::to_string(w.dim(1)) +
                                       " but input has " + std::to_string(cin));
  detail::require(b.size() == cout, "conv1d: axis 0 (output channels) of weight is " + std::to_string(cout) +
                                        " but bias has " + std::to_string(b.size()));
  detail::require(len >= k, "conv1d: axis 1 (time) length " + std::to_string(len) + " shorter than kernel " +
                                std::to_string(k));
  const std::size_t lout = conv_out_len(len, k, stride);
  std::vector<T> out(cout * lout);
  const T* X = x.data().data();
  const T* W = w.data().data();
  for (std::size_t o = 0; o < cout; ++o) {
    T* orow = out.data() + o * lout;
    std::fill(orow, orow + lout, b[o]);
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t kk = 0; kk < k; ++kk) {
        const T wv = W[(o * cin + c) * k + kk];
        const T* xrow = X + c * len + kk;
        for (std::size_t t = 0; t < lout; ++t) orow[t] += wv * xrow[t * stride];
      }
  }
  return detail::make_result<T>(
      Shape{cout, lout}, std::move(out), {&x, &w, &b},
      [x, w, b, cin, len, cout, k, lout, stride](detail::Node<T>& o) {
        const T* G = o.grad.data();
        auto gx = detail::sink(x);
        auto gw = detail::sink(w);
        auto gb = detail::sink(b);
        const T* X = x.data().data();
        const T* W = w.data().data();
        for (std::size_t oc = 0; oc < cout; ++oc) {
          const T* grow = G + oc * lout;
          if (!gb.empty())
            for (std::size_t t = 0; t < lout; ++t) gb[oc] += grow[t];
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t kk = 0; kk < k; ++kk) {
              const std::size_t wi = (oc * cin + c) * k + kk;
              if (!gx.empty()) {
                const T wv = W[wi];
                T* gxrow = gx.data() + c * len + kk;
                for (std::size_t t = 0; t < lout; ++t) gxrow[t * stride] += wv * grow[t];
              }
              if (!gw.empty()) {
                const T* xrow = X + c * len + kk;
                T s = 0;
                for (std::size_t t = 0; t < lout; ++t) s += grow[t] * xrow[t * stride];
                gw[wi] += s;
              }
            }
        }
      });
}

/// input [Cin×L], weight [Cin×Cout×K], bias [Cout] -> [Cout×((L-1)·stride+K)].
/// With zero bias this is the adjoint of conv1d sharing the same weight array.
template <class T>
Tensor<T> transposed_conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride) {
  detail::require(stride >= 1, "transposed_conv1d: stride must be >= 1");
  detail::require(x.rank() == 2, "transposed_conv1d: input must be [Cin x L], got " + shape_str(x.shape()));
  detail::require(w.rank() == 3, "transposed_conv1d: weight must be [Cin x Cout x K], got " + shape_str(w.shape()));
  const std::size_t cin = x.dim(0), len = x.dim(1);
  const std::size_t cout = w.dim(1), k = w.dim(2);
  detail::require(w.dim(0) == cin, "transposed_conv1d: axis 0 (input channels) of weight is " +
                                       std::to_string(w.dim(0)) + " but input has " + std::to_string(cin));
  detail::require(b.size() == cout, "transposed_conv1d: axis 1 (output channels) of weight is " +
                                        std::to_string(cout) + " but bias has " + std::to_string(b.size()));
  detail::require(len >= 1, "transposed_conv1d: empty input");
  const std::size_t lout = (len - 1) * stride + k;
  std::vector<T> out(cout * lout);
  const T* X = x.data().data();
  const T* W = w.data().data();
  for (std::size_t o = 0; o < cout; ++o) std::fill(out.begin() + static_cast<std::ptrdiff_t>(o * lout),
                                                   out.begin() + static_cast<std::ptrdiff_t>((o + 1) * lout), b[o]);
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t kk = 0; kk < k; ++kk) {
        const T wv = W[(c * cout + o) * k + kk];
        const T* xrow = X + c * len;
        T* orow = out.data() + o * lout + kk;
        for (std::size_t t = 0; t < len; ++t) orow[t * stride] += wv * xrow[t];
      }
  return detail::make_result<T>(
      Shape{cout, lout}, std::move(out), {&x, &w, &b},
      [x, w, b, cin, len, cout, k, lout, stride](detail::Node<T>& o) {
        const T* G = o.grad.data();
        auto gx = detail::sink(x);
        auto gw = detail::sink(w);
        auto gb = detail::sink(b);
        const T* X = x.data().data();
        const T* W = w.data().data();
        if (!gb.empty())
          for (std::size_t oc = 0; oc < cout; ++oc)
            for (std::size_t t = 0; t < lout; ++t) gb[oc] += G[oc * lout + t];
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t oc = 0; oc < cout; ++oc)
            for (std::size_t kk = 0; kk < k; ++kk) {
              const std::size_t wi = (c * cout + oc) * k + kk;
              const T* grow = G + oc * lout + kk;
              if (!gx.empty()) {
                const T wv = W[wi];
                T* gxrow = gx.data() + c * len;
                for (std::size_t t = 0; t < len; ++t) gxrow[t] += wv * grow[t * stride];
              }
              if (!gw.empty()) {
                const T* xrow = X + c * len;
                T s = 0;
                for (std::size_t t = 0; t < len; ++t) s += xrow[t] * grow[t * stride];
                gw[wi] += s;
              }
            }
      });
}

// ---------------------------------------------------------------------- LSTM

template <class T>
struct LstmLayerParams {
  Tensor<T> w_input;   // [D × 4H], gate order: input, forget, cell, output
  Tensor<T> w_hidden;  // [H × 4H]
  Tensor<T> bias;      // [4H]
};

/// Unidirectional multi-layer LSTM over a [T×D] sequence; every layer keeps
/// the hidden size equal to D so the output is [T×D].
template <class T>
Tensor<T> lstm_forward(const Tensor<T>& input, const std::vector<LstmLayerParams<T>>& layers) {
  detail::require(!layers.empty(), "lstm_forward: need at least one layer");
  detail::require_matrix(input, "lstm_forward");
  Tensor<T> seq = input;
  for (const auto& p : layers) {
    const std::size_t steps = seq.dim(0);
    const std::size_t hidden = p.w_hidden.dim(0);
    detail::require(p.w_input.dim(0) == seq.dim(1) && p.w_input.dim(1) == 4 * hidden,
                    "lstm_forward: input weight " + shape_str(p.w_input.shape()) + " does not fit input " +
                        shape_str(seq.shape()));
    auto pre = linear(seq, p.w_input, p.bias);  // [T × 4H]
    auto h = Tensor<T>::zeros(Shape{1, hidden});
    auto c = Tensor<T>::zeros(Shape{1, hidden});
    std::vector<Tensor<T>> outputs;
    outputs.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      auto gates = add(slice_rows(pre, t, 1), matmul(h, p.w_hidden));
      auto i = sigmoid(slice_cols(gates, 0, hidden));
      auto f = sigmoid(slice_cols(gates, hidden, hidden));
      auto g = tanh(slice_cols(gates, 2 * hidden, hidden));
      auto o = sigmoid(slice_cols(gates, 3 * hidden, hidden));
      c = add(mul(f, c), mul(i, g));
      h = mul(o, tanh(c));
      outputs.push_back(h);
    }
    seq = concat(outputs, 0);
  }
  return seq;
}

}  // namespace sslse
