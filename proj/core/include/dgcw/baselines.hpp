#pragma once

// Context modules compared against DGCW, and the generic pairwise operator
//   y = F + h(g(f(w1(F), w2(F)), w3(F)), F)
// of which DGCW and non-local attention are instances.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include "dgcw/dgcw.hpp"
#include "dgcw/layers.hpp"
#include "dgcw/ops.hpp"
#include "dgcw/params.hpp"
#include "dgcw/tensor.hpp"

namespace dgcw {

// Pure local aggregation: DGCW with every weight vector forced to ones,
// i.e. F + US(P * g(V_i)).
template <typename T>
struct ConvContextParams {
  LinearParams<T> wv, g1, g2;
  std::size_t downsample_ratio = 4;
  DownsampleKind downsample = DownsampleKind::AvgPool;
};

// Shares parameter names and initialization with make_dgcw_params.
template <typename T>
ConvContextParams<T> make_conv_context_params(const DgcwConfig& cfg, std::uint64_t seed, std::string_view prefix);

template <typename T>
Tensor<T> conv_context(const Tensor<T>& f, const ConvContextParams<T>& p);

// F + US(1x1(GAP(F))). The projection starts at zero.
template <typename T>
struct GapContextParams {
  LinearParams<T> proj;
};

template <typename T>
GapContextParams<T> make_gap_context_params(std::size_t channels, std::uint64_t seed, std::string_view prefix);

template <typename T>
Tensor<T> gap_context(const Tensor<T>& f, const GapContextParams<T>& p);

// Squeeze-and-excitation: F * sigmoid(fc2(relu(fc1(GAP(F))))).
template <typename T>
struct SeContextParams {
  LinearParams<T> fc1, fc2;
};

template <typename T>
SeContextParams<T> make_se_context_params(std::size_t channels, std::size_t reduction, std::uint64_t seed,
                                          std::string_view prefix);

template <typename T>
Tensor<T> se_context(const Tensor<T>& f, const SeContextParams<T>& p);

enum class NonLocalMode {
  Hold,        // full resolution
  Downsample,  // same downsampling as DGCW
};

template <typename T>
struct NonLocalParams {
  LinearParams<T> theta, phi, value;  // C -> C'
  LinearParams<T> out;                // C' -> C, starts at zero
  NonLocalMode mode = NonLocalMode::Hold;
  std::size_t downsample_ratio = 4;
  DownsampleKind downsample = DownsampleKind::AvgPool;
};

// C' = max(1, C / 2).
template <typename T>
NonLocalParams<T> make_nonlocal_params(std::size_t channels, NonLocalMode mode, std::size_t ratio,
                                       std::uint64_t seed, std::string_view prefix);

// F + US(out(softmax_j(theta_i . phi_j) value_j))
template <typename T>
Tensor<T> nonlocal_context(const Tensor<T>& f, const NonLocalParams<T>& p);

template <typename T>
void register_params(ParamSet<T>& set, const std::string& prefix, const ConvContextParams<T>& p);
template <typename T>
void register_params(ParamSet<T>& set, const std::string& prefix, const GapContextParams<T>& p);
template <typename T>
void register_params(ParamSet<T>& set, const std::string& prefix, const SeContextParams<T>& p);
template <typename T>
void register_params(ParamSet<T>& set, const std::string& prefix, const NonLocalParams<T>& p);

template <typename T>
struct ContextOperator {
  using Unary = std::function<Tensor<T>(const Tensor<T>&)>;
  using Binary = std::function<Tensor<T>(const Tensor<T>&, const Tensor<T>&)>;

  Unary w1, w2, w3;
  Binary f;  // pairwise relation from the two embeddings
  Binary g;  // relation applied to the values
  Binary h;  // (aggregate, input) -> update at the input's resolution

  Tensor<T> operator()(const Tensor<T>& x) const { return add(x, h(g(f(w1(x), w2(x)), w3(x)), x)); }
};

// Reproduces dgcw_forward(..., DgcwImpl::Naive) exactly.
template <typename T>
ContextOperator<T> make_dgcw_operator(const DgcwParams<T>& p);

// Reproduces nonlocal_context exactly.
template <typename T>
ContextOperator<T> make_nonlocal_operator(const NonLocalParams<T>& p);

}  // namespace dgcw
