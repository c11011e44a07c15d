#pragma once

// Parameterized building blocks over N x C x H x W feature maps.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dgcw/labels.hpp"
#include "dgcw/tensor.hpp"

namespace dgcw {

constexpr int kIgnoreIndex = 255;

template <typename T>
struct LinearParams {
  Tensor<T> weight;  // out x in
  Tensor<T> bias;    // out

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
};

template <typename T>
struct Conv2dParams {
  Tensor<T> weight;  // out x in x kh x kw
  Tensor<T> bias;    // out; may be undefined
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
};

template <typename T>
struct BatchNormParams {
  Tensor<T> scale;
  Tensor<T> shift;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T epsilon = T(1e-5);
};

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) drawn from a stream keyed by
// (seed, name); biases zero.
template <typename T>
LinearParams<T> make_linear(std::size_t in, std::size_t out, std::uint64_t seed, std::string_view name);

// "Same" padding for odd kernels: dilation * (kernel - 1) / 2.
template <typename T>
Conv2dParams<T> make_conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                            std::size_t dilation, std::uint64_t seed, std::string_view name, bool bias = true);

template <typename T>
BatchNormParams<T> make_batchnorm(std::size_t channels);

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding,
                               std::size_t dilation);

// Per-pixel affine map; same result as a matmul over flattened pixels.
template <typename T>
Tensor<T> linear_1x1(const Tensor<T>& x, const LinearParams<T>& p);

// Affine map over the last axis: [..., in] -> [..., out].
template <typename T>
Tensor<T> linear_rows(const Tensor<T>& x, const LinearParams<T>& p);

// Cross-correlation with stride, zero padding and dilation.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Conv2dParams<T>& p);

// Training mode normalizes with batch statistics (population variance) and
// folds them into the running statistics with p.momentum.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, BatchNormParams<T>& p, bool training);

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

// Window i covers [floor(i*H/oh), ceil((i+1)*H/oh)).
template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);

// Bilinear, align_corners = false; also used for downsampling.
template <typename T>
Tensor<T> resample_bilinear(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);

LabelMap resample_nearest(const LabelMap& labels, std::size_t out_h, std::size_t out_w);

// Mean of -log softmax(logits)[label] over pixels that are not ignored and,
// when `keep` is given, have keep[pixel] != 0. Zero when no pixel counts.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const LabelMap& labels, int ignore_index = kIgnoreIndex,
                        const std::vector<std::uint8_t>* keep = nullptr);

// Softmax probability of the labelled class per pixel; ignored pixels get -1.
template <typename T>
std::vector<T> correct_class_probs(const Tensor<T>& logits, const LabelMap& labels,
                                   int ignore_index = kIgnoreIndex);

}  // namespace dgcw
