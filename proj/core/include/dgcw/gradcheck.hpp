#pragma once

#include <cstddef>
#include <functional>

#include "dgcw/tensor.hpp"

namespace dgcw {

struct GradcheckResult {
  double max_rel_error = 0;
  // max |a - n| / max(max |a|, max |n|, 1e-8) over the checked elements.
  double normwise_rel_error = 0;
  std::size_t worst_index = 0;
  double analytic = 0;
  double numeric = 0;
  std::size_t checked = 0;
};

// Compares the autodiff gradient of scalar f at x against central
// differences, element by element. Relative error is
// |a - n| / max(|a|, |n|, 1e-8). `x` must be a leaf; it is perturbed in place
// and restored. When max_elements is nonzero an evenly spaced subset of that
// many elements is checked.
template <typename T>
GradcheckResult gradcheck_detail(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> x, T step,
                                 std::size_t max_elements = 0);

template <typename T>
T gradcheck(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> x, T step,
            std::size_t max_elements = 0) {
  return static_cast<T>(gradcheck_detail(f, std::move(x), step, max_elements).max_rel_error);
}

}  // namespace dgcw
