#pragma once

// Reverse-mode automatic differentiation core: Tensor handles and the Tape
// that records differentiable operations on the current thread.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sslse {

using Shape = std::vector<std::size_t>;

/// Raised when tensor shapes are incompatible for an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <class T>
class Tape;
template <class T>
class NoGradScope;

namespace detail {

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something is accumulated into it
  bool requires_grad = false;
  bool leaf = true;

  std::span<T> grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    node_->value.assign(sslse::numel(shape), T(0));
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    if (sslse::numel(shape) != values.size())
      throw DimensionError("tensor: " + shape_str(shape) + " needs " +
                           std::to_string(sslse::numel(shape)) + " values, got " +
                           std::to_string(values.size()));
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), requires_grad);
  }
  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.node_->value.begin(), t.node_->value.end(), v);
    return t;
  }
  static Tensor scalar(T v, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<T>{v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const {
    if (axis >= rank())
      throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    return node_->shape[axis];
  }
  std::size_t size() const { return node_->value.size(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  T item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }
  T& operator[](std::size_t i) { return node_->value[i]; }
  const T& operator[](std::size_t i) const { return node_->value[i]; }
  T& at(std::size_t r, std::size_t c) { return node_->value[r * node_->shape[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const { return node_->value[r * node_->shape[1] + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool is_leaf() const { return node_->leaf; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; zero-filled if nothing has been accumulated yet.
  std::span<T> grad() { return node_->grad_buffer(); }
  std::span<const T> grad() const { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  /// Value copy cut off from any recorded history.
  Tensor detach() const { return Tensor(shape(), values(), false); }
  /// Deep copy keeping the requires_grad flag (a fresh leaf).
  Tensor clone() const { return Tensor(shape(), values(), requires_grad()); }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(values().begin(), values().end());
    return Tensor<U>(shape(), std::move(out), requires_grad());
  }

  bool same(const Tensor& other) const { return node_ == other.node_; }

  // Engine access; ops build on these.
  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node<T>> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

/// Ordered record of differentiable operations executed on this thread
/// while the tape is alive. Only operations with at least one input that
/// requires a gradient are recorded. Construction makes the tape active;
/// destruction restores the previously active tape.
template <class T>
class Tape {
 public:
  using NodePtr = std::shared_ptr<detail::Node<T>>;
  using BackwardFn = std::function<void(detail::Node<T>& out)>;

  Tape() : previous_(active_) { active_ = this; }
  ~Tape() { active_ = previous_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  std::size_t size() const { return entries_.size(); }

  void record(NodePtr output, std::vector<NodePtr> inputs, BackwardFn fn) {
    output->leaf = false;
    entries_.push_back(Entry{std::move(output), std::move(inputs), std::move(fn)});
  }

  /// Accumulates d(loss)/d(x) into every requires_grad leaf reachable from
  /// `loss`. Intermediate gradients are reset on each call, leaf gradients
  /// accumulate until zero_grad().
  void backward(const Tensor<T>& loss) {
    if (loss.size() != 1 || loss.rank() != 0)
      throw DimensionError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;
    auto it = std::find_if(entries_.rbegin(), entries_.rend(),
                           [&](const Entry& e) { return e.output == loss.node(); });
    if (it == entries_.rend())
      throw std::logic_error("backward: loss was not produced on this tape");
    for (auto& e : entries_) e.output->grad.clear();
    loss.node()->grad.assign(1, T(1));
    for (; it != entries_.rend(); ++it) {
      if (it->output->grad.empty()) continue;  // not on a path to the loss
      it->backward(*it->output);
    }
  }

  /// Drops recorded history (tensors stay alive while referenced elsewhere).
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    NodePtr output;
    std::vector<NodePtr> inputs;
    BackwardFn backward;
  };

  std::vector<Entry> entries_;
  Tape* previous_;
  static inline thread_local Tape* active_ = nullptr;
  friend class NoGradScope<T>;
};

/// Suspends recording on the current thread for its lifetime.
template <class T>
class NoGradScope {
 public:
  NoGradScope() : saved_(Tape<T>::active_) { Tape<T>::active_ = nullptr; }
  ~NoGradScope() { Tape<T>::active_ = saved_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* saved_;
};

namespace detail {

/// Builds an op result. When recording is active and any input requires a
/// gradient, the result requires one too and `fn` is registered as its
/// backward rule.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::initializer_list<const Tensor<T>*> inputs,
                      typename Tape<T>::BackwardFn fn) {
  Tensor<T> out(std::move(shape), std::move(value));
  Tape<T>* tape = Tape<T>::active();
  if (!tape) return out;
  bool needs = false;
  for (const auto* in : inputs) needs = needs || in->requires_grad();
  if (!needs) return out;
  out.set_requires_grad(true);
  std::vector<std::shared_ptr<Node<T>>> nodes;
  nodes.reserve(inputs.size());
  for (const auto* in : inputs) nodes.push_back(in->node());
  tape->record(out.node(), std::move(nodes), std::move(fn));
  return out;
}

template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const std::vector<Tensor<T>>& inputs,
                      typename Tape<T>::BackwardFn fn) {
  Tensor<T> out(std::move(shape), std::move(value));
  Tape<T>* tape = Tape<T>::active();
  if (!tape) return out;
  bool needs = std::any_of(inputs.begin(), inputs.end(), [](const auto& t) { return t.requires_grad(); });
  if (!needs) return out;
  out.set_requires_grad(true);
  std::vector<std::shared_ptr<Node<T>>> nodes;
  for (const auto& in : inputs) nodes.push_back(in.node());
  tape->record(out.node(), std::move(nodes), std::move(fn));
  return out;
}

/// Gradient sink for an input; returns an empty span if it needs none.
template <class T>
std::span<T> sink(const Tensor<T>& t) {
  if (!t.requires_grad()) return {};
  return t.node()->grad_buffer();
}

}  // namespace detail
}  // namespace sslse
