#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dgcw/tensor.hpp"

namespace dgcw {

// N x H x W integer label maps; 255 marks ignored pixels.
struct LabelMap {
  std::size_t n = 0, h = 0, w = 0;
  std::vector<std::int32_t> values;

  LabelMap() = default;
  LabelMap(std::size_t n_, std::size_t h_, std::size_t w_, std::int32_t fill = 0)
      : n(n_), h(h_), w(w_), values(n_ * h_ * w_, fill) {}

  std::size_t size() const { return values.size(); }
  std::int32_t& at(std::size_t b, std::size_t y, std::size_t x) { return values[(b * h + y) * w + x]; }
  std::int32_t at(std::size_t b, std::size_t y, std::size_t x) const { return values[(b * h + y) * w + x]; }
  bool operator==(const LabelMap&) const = default;
};

// Images N x 3 x H x W with labels N x H x W.
template <typename T>
struct SegBatch {
  Tensor<T> images;
  LabelMap labels;
};

// Labels travel as float tensors of integer values (DGT1 datasets).
template <typename T>
LabelMap labels_from_tensor(const Tensor<T>& t);
template <typename T>
Tensor<T> labels_to_tensor(const LabelMap& labels);

}  // namespace dgcw
