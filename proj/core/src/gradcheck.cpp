#include "dgcw/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dgcw {

template <typename T>
GradcheckResult gradcheck_detail(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> x, T step,
                                 std::size_t max_elements) {
  if (!x.is_leaf()) throw std::logic_error("gradcheck needs a leaf tensor");
  const bool had_flag = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();
  {
    auto y = f(x);
    backward(y);
  }
  std::vector<T> analytic(x.numel(), T(0));
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
  x.zero_grad();

  std::vector<std::size_t> indices;
  const std::size_t n = x.numel();
  if (max_elements == 0 || max_elements >= n) {
    for (std::size_t i = 0; i < n; ++i) indices.push_back(i);
  } else {
    for (std::size_t k = 0; k < max_elements; ++k) indices.push_back(k * n / max_elements);
  }

  GradcheckResult result;
  NoGradGuard no_grad;
  auto values = x.mutable_data();
  double max_diff = 0, max_scale = 1e-8;
  for (auto i : indices) {
    const T saved = values[i];
    values[i] = saved + step;
    const double up = static_cast<double>(f(x).item());
    values[i] = saved - step;
    const double down = static_cast<double>(f(x).item());
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * static_cast<double>(step));
    const double a = static_cast<double>(analytic[i]);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    ++result.checked;
    max_diff = std::max(max_diff, std::abs(a - numeric));
    max_scale = std::max({max_scale, std::abs(a), std::abs(numeric)});
    if (rel >= result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = i;
      result.analytic = a;
      result.numeric = numeric;
    }
  }
  result.normwise_rel_error = max_diff / max_scale;
  x.set_requires_grad(had_flag);
  return result;
}

template GradcheckResult gradcheck_detail(const std::function<Tensor<float>(const Tensor<float>&)>&, Tensor<float>,
                                          float, std::size_t);
template GradcheckResult gradcheck_detail(const std::function<Tensor<double>(const Tensor<double>&)>&,
                                          Tensor<double>, double, std::size_t);

}  // namespace dgcw
