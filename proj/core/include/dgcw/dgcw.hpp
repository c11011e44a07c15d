#pragma once

// Distance guided channel weighting.
//
// For a feature map F (N x C x H x W) the module downsamples to D
// (N x C x h x w, P = h*w pixels), projects D to Q, K, V (N x P x C each) and,
// for every pixel pair (i, j), forms the squared per-channel distance
// M[i,j] = (Q_i - K_j)^2, normalizes it over channels into weights W[i,j],
// reweights V_i by W[i,j] and maps the result through g (linear, ReLU,
// linear) to R[i,j]. The update sum_j R[i,j] is upsampled back to H x W and
// added to F.
//
// Pairwise tensors are laid out pair-major: [n, i, j, c].
//
// Two implementations are provided. NAIVE materializes M, W and R
// (N x P x P x C each) out of generic differentiable ops. FUSED streams over
// blocks of `block` key pixels and never holds more than O(P * block * C)
// scratch; it has a hand-written backward pass that recomputes each block.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>

#include "dgcw/layers.hpp"
#include "dgcw/params.hpp"
#include "dgcw/tensor.hpp"

namespace dgcw {

enum class NormKind { Dbs, Softmax, Tanh };
enum class DgcwImpl { Naive, Fused };
enum class DownsampleKind { AvgPool, Bilinear };

const char* norm_kind_name(NormKind k);
NormKind parse_norm_kind(std::string_view s);
const char* dgcw_impl_name(DgcwImpl k);
DgcwImpl parse_dgcw_impl(std::string_view s);

// DBS denominator offset: 1e-12 for double, 1e-6 for float.
template <typename T>
constexpr T default_dbs_epsilon() {
  return sizeof(T) >= 8 ? T(1e-12) : T(1e-6);
}

struct DgcwConfig {
  std::size_t channels = 32;
  std::size_t hidden = 0;  // width of g's first layer; 0 means `channels`
  NormKind norm = NormKind::Dbs;
  std::size_t downsample_ratio = 4;
  DownsampleKind downsample = DownsampleKind::AvgPool;
  std::size_t block = 16;
  double epsilon = 0;  // 0 selects default_dbs_epsilon<T>()
  bool zero_init_g2 = true;
};

template <typename T>
struct DgcwParams {
  LinearParams<T> wq, wk, wv;
  LinearParams<T> g1;  // C -> C_g, followed by ReLU
  LinearParams<T> g2;  // C_g -> C
  NormKind norm_kind = NormKind::Dbs;
  std::size_t downsample_ratio = 4;
  DownsampleKind downsample = DownsampleKind::AvgPool;
  std::size_t block = 16;
  T epsilon = default_dbs_epsilon<T>();

  std::size_t channels() const { return wq.out_channels(); }
};

template <typename T>
DgcwParams<T> make_dgcw_params(const DgcwConfig& cfg, std::uint64_t seed, std::string_view prefix);

template <typename T>
void register_params(ParamSet<T>& set, const std::string& prefix, const DgcwParams<T>& p);

// Extents after downsampling by `ratio` (floor, at least 1).
std::pair<std::size_t, std::size_t> downsampled_extent(std::size_t h, std::size_t w, std::size_t ratio);

template <typename T>
Tensor<T> downsample(const Tensor<T>& f, std::size_t ratio, DownsampleKind kind);

// N x C x h x w <-> N x P x C
template <typename T>
Tensor<T> flatten_pixels(const Tensor<T>& x);
template <typename T>
Tensor<T> unflatten_pixels(const Tensor<T>& x, std::size_t h, std::size_t w);

template <typename T>
struct Qkv {
  Tensor<T> q, k, v;
};

// D is already downsampled: N x C x h x w -> three N x P x C projections.
template <typename T>
Qkv<T> qkv_project(const Tensor<T>& d, const DgcwParams<T>& p);

// M[n,i,j,c] = (Q[n,i,c] - K[n,j,c])^2
template <typename T>
Tensor<T> channel_distance(const Tensor<T>& q, const Tensor<T>& k);

// Normalizes over the channel axis (last) of each pair:
//   DBS     W = M / (sum_c M + epsilon)
//   SOFTMAX W = softmax_c(M)
//   TANH    W = tanh(M)
template <typename T>
Tensor<T> normalize_weights(const Tensor<T>& m, NormKind kind, T epsilon);

// W[n,i,j,:] * V[n,i,:] -> pair-major N x P x P x C
template <typename T>
Tensor<T> weight_values(const Tensor<T>& w, const Tensor<T>& v);

// R[n,i,j] = g(W[n,i,j] * V[n,i])
template <typename T>
Tensor<T> relationship(const Tensor<T>& w, const Tensor<T>& v, const DgcwParams<T>& p);

// sum_j R[n,i,j,:] -> N x P x C
template <typename T>
Tensor<T> sum_partners(const Tensor<T>& r);

// F + US(S) with S (N x P x C) on F's grid downsampled by `ratio`.
template <typename T>
Tensor<T> residual_upsample(const Tensor<T>& s, const Tensor<T>& f, std::size_t ratio);

// F + US(sum_j R[:, :, j])
template <typename T>
Tensor<T> aggregate(const Tensor<T>& r, const Tensor<T>& f, const DgcwParams<T>& p);

// sum_j g(f(M[i,j]) * V_i) without materializing any P x P tensor.
template <typename T>
Tensor<T> fused_pair_context(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const DgcwParams<T>& p);

template <typename T>
Tensor<T> dgcw_forward(const Tensor<T>& f, const DgcwParams<T>& p, DgcwImpl impl);

}  // namespace dgcw
