#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
//
// Every differentiable op that sees an input with requires_grad() (while grad
// mode is enabled) records a GradNode on its output. Nodes carry a sequence
// number drawn from a per-thread counter, so the recorded graph's topological
// order is the execution order. backward() collects the nodes reachable from
// the loss and replays their rules once each, in descending sequence order.
// Graphs built on different threads never share nodes.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgcw/memory.hpp"

namespace dgcw {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
struct TensorImpl;

template <typename T>
struct GradNode {
  std::uint64_t seq = 0;
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  // Receives the output gradient and accumulates into the inputs.
  std::function<void(std::span<const T>)> backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  Buffer<T> data;
  Buffer<T> grad;
  bool requires_grad = false;
  std::shared_ptr<GradNode<T>> node;

  // Zero-filled on first use.
  Buffer<T>& grad_buffer();
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor from(Shape shape, Buffer<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  // Only leaves may be written; results of recorded ops are immutable.
  std::span<T> mutable_data();
  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();

  // Same values, no history.
  Tensor detach() const;
  Tensor clone() const;

  void backward() const;

  TensorImpl<T>* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl<T>>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

namespace detail {

// Builds an op result. When grad mode is on and any input requires grad, a
// node is attached with the given backward rule.
template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> data, std::initializer_list<Tensor<T>> inputs,
                      const char* op, std::function<void(std::span<const T>)> backward);

template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> data, const std::vector<Tensor<T>>& inputs,
                      const char* op, std::function<void(std::span<const T>)> backward);

// Adds g into t's gradient if t participates in differentiation.
template <typename T>
void accumulate(const Tensor<T>& t, std::span<const T> g);

template <typename T>
inline bool wants_grad(const Tensor<T>& t) {
  return t.defined() && t.requires_grad();
}

}  // namespace detail

template <typename U, typename T>
Tensor<U> cast(const Tensor<T>& x) {
  Buffer<U> out(x.numel());
  auto src = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(src[i]);
  return Tensor<U>::from(x.shape(), std::move(out), x.requires_grad());
}

// Ordered list of nodes reachable from `root`, latest first.
template <typename T>
std::vector<TensorImpl<T>*> graph_order(const Tensor<T>& root);

template <typename T>
void backward(const Tensor<T>& loss);

}  // namespace dgcw
