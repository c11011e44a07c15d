#include "dgcw/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace dgcw {

std::atomic<std::size_t> MemoryTracker::current_{0};
std::atomic<std::size_t> MemoryTracker::peak_{0};

void MemoryTracker::on_alloc(std::size_t bytes) noexcept {
  std::size_t now = current_.fetch_add(bytes, std::memory_order_relaxed) + bytes;
  std::size_t seen = peak_.load(std::memory_order_relaxed);
  while (now > seen && !peak_.compare_exchange_weak(seen, now, std::memory_order_relaxed)) {
  }
}

void MemoryTracker::on_free(std::size_t bytes) noexcept {
  current_.fetch_sub(bytes, std::memory_order_relaxed);
}

std::size_t MemoryTracker::current() noexcept { return current_.load(std::memory_order_relaxed); }
std::size_t MemoryTracker::peak() noexcept { return peak_.load(std::memory_order_relaxed); }

std::size_t MemoryTracker::reset_peak() noexcept {
  std::size_t now = current_.load(std::memory_order_relaxed);
  peak_.store(now, std::memory_order_relaxed);
  return now;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;
thread_local std::uint64_t g_next_seq = 1;

void check_shape(const Shape& shape) {
  for (auto e : shape)
    if (e == 0) throw ShapeError("tensor extents must be positive: " + shape_str(shape));
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Buffer<T>& TensorImpl<T>::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), T(0));
  return grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  return from(std::move(shape), Buffer<T>(values.begin(), values.end()), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, Buffer<T> values, bool requires_grad) {
  check_shape(shape);
  if (values.size() != shape_numel(shape))
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_str(shape));
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  if (!impl_) throw std::logic_error("undefined tensor");
  return impl_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis out of range");
  return s[axis];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return impl_ ? impl_->data.size() : 0;
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  return {impl_->data.data(), impl_->data.size()};
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  if (impl_->node) throw std::logic_error("cannot mutate the result of a recorded op");
  return {impl_->data.data(), impl_->data.size()};
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("index rank mismatch");
  std::size_t off = 0, k = 0;
  for (auto i : index) {
    if (i >= s[k]) throw ShapeError("index out of range");
    off = off * s[k++] + i;
  }
  return impl_->data[off];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return impl_ && impl_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool value) {
  if (impl_->node && !value) throw std::logic_error("cannot clear requires_grad on a non-leaf");
  impl_->requires_grad = value;
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  return !impl_->node;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return impl_ && !impl_->grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) throw std::logic_error("tensor has no gradient");
  return {impl_->grad.data(), impl_->grad.size()};
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  auto& g = impl_->grad_buffer();
  return {g.data(), g.size()};
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (impl_) impl_->grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  auto out = detach();
  out.impl()->requires_grad = impl_->requires_grad && !impl_->node;
  return out;
}

template <typename T>
void Tensor<T>::backward() const {
  dgcw::backward(*this);
}

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> data, const std::vector<Tensor<T>>& inputs,
                      const char* op, std::function<void(std::span<const T>)> backward) {
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& in : inputs) any = any || wants_grad(in);
    if (any) {
      auto node = std::make_shared<GradNode<T>>();
      node->seq = g_next_seq++;
      node->op = op;
      for (const auto& in : inputs)
        if (wants_grad(in)) node->inputs.push_back(in.impl_ptr());
      node->backward = std::move(backward);
      impl->node = std::move(node);
      impl->requires_grad = true;
    }
  }
  return Tensor<T>(std::move(impl));
}

template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> data, std::initializer_list<Tensor<T>> inputs,
                      const char* op, std::function<void(std::span<const T>)> backward) {
  return make_result(std::move(shape), std::move(data), std::vector<Tensor<T>>(inputs), op,
                     std::move(backward));
}

template <typename T>
void accumulate(const Tensor<T>& t, std::span<const T> g) {
  if (!wants_grad(t)) return;
  auto& dst = t.impl()->grad_buffer();
  if (dst.size() != g.size()) throw std::logic_error("gradient size mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

}  // namespace detail

template <typename T>
std::vector<TensorImpl<T>*> graph_order(const Tensor<T>& root) {
  std::vector<TensorImpl<T>*> order;
  std::unordered_set<TensorImpl<T>*> seen;
  std::vector<TensorImpl<T>*> stack{root.impl()};
  while (!stack.empty()) {
    auto* cur = stack.back();
    stack.pop_back();
    if (!cur->node || !seen.insert(cur).second) continue;
    order.push_back(cur);
    for (const auto& in : cur->node->inputs) stack.push_back(in.get());
  }
  std::sort(order.begin(), order.end(),
            [](const TensorImpl<T>* a, const TensorImpl<T>* b) { return a->node->seq > b->node->seq; });
  return order;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ShapeError("backward() needs a scalar loss, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  if (!loss.requires_grad()) return;
  auto order = graph_order(loss);
  loss.impl()->grad_buffer()[0] += T(1);
  NoGradGuard no_grad;
  for (auto* impl : order) {
    if (impl->grad.empty()) continue;
    impl->node->backward(std::span<const T>(impl->grad.data(), impl->grad.size()));
    // Interior gradients are consumed once; only leaves keep theirs.
    Buffer<T>().swap(impl->grad);
  }
}

#define DGCW_INSTANTIATE_TENSOR(T)                                                           \
  template struct TensorImpl<T>;                                                             \
  template class Tensor<T>;                                                                  \
  template Tensor<T> detail::make_result(Shape, Buffer<T>, std::initializer_list<Tensor<T>>, \
                                         const char*, std::function<void(std::span<const T>)>); \
  template Tensor<T> detail::make_result(Shape, Buffer<T>, const std::vector<Tensor<T>>&,    \
                                         const char*, std::function<void(std::span<const T>)>); \
  template void detail::accumulate(const Tensor<T>&, std::span<const T>);                    \
  template std::vector<TensorImpl<T>*> graph_order(const Tensor<T>&);                        \
  template void backward(const Tensor<T>&);

DGCW_INSTANTIATE_TENSOR(float)
DGCW_INSTANTIATE_TENSOR(double)

}  // namespace dgcw
