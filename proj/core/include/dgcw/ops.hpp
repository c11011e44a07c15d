#pragma once

// Differentiable tensor operations. All functions are instantiated for float
// and double.

#include <cstddef>
#include <vector>

#include "dgcw/tensor.hpp"

namespace dgcw {

enum class BinaryKind { Add, Sub, Mul, Div };
enum class UnaryKind { Neg, Square, Relu, Tanh, Exp, Log, Sigmoid };
enum class ReduceKind { Sum, Mean, Max, Variance };

// Numpy-style broadcast of two shapes, aligned at the trailing dimension.
Shape broadcast_shape(const Shape& a, const Shape& b);

// Div throws std::domain_error on a zero denominator.
template <typename T>
Tensor<T> elementwise(BinaryKind kind, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> elementwise(BinaryKind kind, const Tensor<T>& a, T b);
template <typename T>
Tensor<T> elementwise(UnaryKind kind, const Tensor<T>& a);

template <typename T>
inline Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryKind::Add, a, b); }
template <typename T>
inline Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryKind::Sub, a, b); }
template <typename T>
inline Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryKind::Mul, a, b); }
template <typename T>
inline Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryKind::Div, a, b); }
template <typename T>
inline Tensor<T> add(const Tensor<T>& a, T b) { return elementwise(BinaryKind::Add, a, b); }
template <typename T>
inline Tensor<T> mul(const Tensor<T>& a, T b) { return elementwise(BinaryKind::Mul, a, b); }

template <typename T>
inline Tensor<T> neg(const Tensor<T>& a) { return elementwise(UnaryKind::Neg, a); }
template <typename T>
inline Tensor<T> square(const Tensor<T>& a) { return elementwise(UnaryKind::Square, a); }
template <typename T>
inline Tensor<T> relu(const Tensor<T>& a) { return elementwise(UnaryKind::Relu, a); }
template <typename T>
inline Tensor<T> tanh(const Tensor<T>& a) { return elementwise(UnaryKind::Tanh, a); }
template <typename T>
inline Tensor<T> exp(const Tensor<T>& a) { return elementwise(UnaryKind::Exp, a); }
template <typename T>
inline Tensor<T> log(const Tensor<T>& a) { return elementwise(UnaryKind::Log, a); }
template <typename T>
inline Tensor<T> sigmoid(const Tensor<T>& a) { return elementwise(UnaryKind::Sigmoid, a); }

// Rank-2 x rank-2, rank-3 x rank-3 (equal batch), or rank-3 x rank-2.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes);
template <typename T>
Tensor<T> transpose(const Tensor<T>& a, std::size_t axis0, std::size_t axis1);

// Variance is the population variance, E[x^2] - E[x]^2 with compensated sums.
template <typename T>
Tensor<T> reduce(ReduceKind kind, const Tensor<T>& a, std::size_t axis, bool keepdim = false);
template <typename T>
Tensor<T> sum_all(const Tensor<T>& a);
template <typename T>
Tensor<T> mean_all(const Tensor<T>& a);

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T>
Tensor<T> flip(const Tensor<T>& a, std::size_t axis);

}  // namespace dgcw
