#include "dgcw/baselines.hpp"

#include <algorithm>
#include <stdexcept>

#include "dgcw/ops.hpp"

namespace dgcw {

namespace {

template <typename T>
void zero_fill(LinearParams<T>& p) {
  auto w = p.weight.mutable_data();
  std::fill(w.begin(), w.end(), T(0));
}

template <typename T>
Tensor<T> pooled_rows(const Tensor<T>& f, std::size_t ratio, DownsampleKind kind) {
  return flatten_pixels(downsample(f, ratio, kind));
}

}  // namespace

template <typename T>
ConvContextParams<T> make_conv_context_params(const DgcwConfig& cfg, std::uint64_t seed, std::string_view prefix) {
  auto full = make_dgcw_params<T>(cfg, seed, prefix);
  ConvContextParams<T> p;
  p.wv = full.wv;
  p.g1 = full.g1;
  p.g2 = full.g2;
  p.downsample_ratio = cfg.downsample_ratio;
  p.downsample = cfg.downsample;
  return p;
}

template <typename T>
Tensor<T> conv_context(const Tensor<T>& f, const ConvContextParams<T>& p) {
  auto v = linear_rows(pooled_rows(f, p.downsample_ratio, p.downsample), p.wv);
  auto r = linear_rows(relu(linear_rows(v, p.g1)), p.g2);
  return residual_upsample(mul(r, static_cast<T>(v.dim(1))), f, p.downsample_ratio);
}

template <typename T>
GapContextParams<T> make_gap_context_params(std::size_t channels, std::uint64_t seed, std::string_view prefix) {
  GapContextParams<T> p{make_linear<T>(channels, channels, seed, std::string(prefix) + ".proj")};
  zero_fill(p.proj);
  return p;
}

template <typename T>
Tensor<T> gap_context(const Tensor<T>& f, const GapContextParams<T>& p) {
  auto y = linear_1x1(global_avg_pool(f), p.proj);
  return add(f, resample_bilinear(y, f.dim(2), f.dim(3)));
}

template <typename T>
SeContextParams<T> make_se_context_params(std::size_t channels, std::size_t reduction, std::uint64_t seed,
                                          std::string_view prefix) {
  if (reduction == 0) throw std::invalid_argument("se reduction must be positive");
  const std::string pre(prefix);
  const std::size_t hidden = std::max<std::size_t>(1, channels / reduction);
  return {make_linear<T>(channels, hidden, seed, pre + ".fc1"), make_linear<T>(hidden, channels, seed, pre + ".fc2")};
}

template <typename T>
Tensor<T> se_context(const Tensor<T>& f, const SeContextParams<T>& p) {
  auto s = sigmoid(linear_1x1(relu(linear_1x1(global_avg_pool(f), p.fc1)), p.fc2));
  return mul(f, s);
}

template <typename T>
NonLocalParams<T> make_nonlocal_params(std::size_t channels, NonLocalMode mode, std::size_t ratio,
                                       std::uint64_t seed, std::string_view prefix) {
  if (ratio == 0) throw std::invalid_argument("non-local downsample ratio must be positive");
  const std::string pre(prefix);
  const std::size_t inner = std::max<std::size_t>(1, channels / 2);
  NonLocalParams<T> p;
  p.theta = make_linear<T>(channels, inner, seed, pre + ".theta");
  p.phi = make_linear<T>(channels, inner, seed, pre + ".phi");
  p.value = make_linear<T>(channels, inner, seed, pre + ".value");
  p.out = make_linear<T>(inner, channels, seed, pre + ".out");
  zero_fill(p.out);
  p.mode = mode;
  p.downsample_ratio = ratio;
  return p;
}

namespace {

template <typename T>
std::size_t nonlocal_ratio(const NonLocalParams<T>& p) {
  return p.mode == NonLocalMode::Hold ? 1 : p.downsample_ratio;
}

template <typename T>
Tensor<T> attention(const Tensor<T>& theta, const Tensor<T>& phi) {
  return softmax(matmul(theta, transpose(phi, 1, 2)), 2);
}

}  // namespace

template <typename T>
Tensor<T> nonlocal_context(const Tensor<T>& f, const NonLocalParams<T>& p) {
  const std::size_t ratio = nonlocal_ratio(p);
  auto x = pooled_rows(f, ratio, p.downsample);
  auto a = attention(linear_rows(x, p.theta), linear_rows(x, p.phi));
  auto y = linear_rows(matmul(a, linear_rows(x, p.value)), p.out);
  return residual_upsample(y, f, ratio);
}

template <typename T>
void register_params(ParamSet<T>& set, const std::string& prefix, const ConvContextParams<T>& p) {
  set.add(prefix + ".wv", p.wv);
  set.add(prefix + ".g1", p.g1);
  set.add(prefix + ".g2", p.g2);
}

template <typename T>
void register_params(ParamSet<T>& set, const std::string& prefix, const GapContextParams<T>& p) {
  set.add(prefix + ".proj", p.proj);
}

template <typename T>
void register_params(ParamSet<T>& set, const std::string& prefix, const SeContextParams<T>& p) {
  set.add(prefix + ".fc1", p.fc1);
  set.add(prefix + ".fc2", p.fc2);
}

template <typename T>
void register_params(ParamSet<T>& set, const std::string& prefix, const NonLocalParams<T>& p) {
  set.add(prefix + ".theta", p.theta);
  set.add(prefix + ".phi", p.phi);
  set.add(prefix + ".value", p.value);
  set.add(prefix + ".out", p.out);
}

template <typename T>
ContextOperator<T> make_dgcw_operator(const DgcwParams<T>& p) {
  auto embed = [p](const LinearParams<T>& w) {
    return [p, w](const Tensor<T>& x) { return linear_rows(pooled_rows(x, p.downsample_ratio, p.downsample), w); };
  };
  ContextOperator<T> op;
  op.w1 = embed(p.wq);
  op.w2 = embed(p.wk);
  op.w3 = embed(p.wv);
  op.f = [p](const Tensor<T>& q, const Tensor<T>& k) {
    return normalize_weights(channel_distance(q, k), p.norm_kind, p.epsilon);
  };
  op.g = [p](const Tensor<T>& w, const Tensor<T>& v) { return sum_partners(relationship(w, v, p)); };
  op.h = [p](const Tensor<T>& s, const Tensor<T>& x) {
    auto [h, w] = downsampled_extent(x.dim(2), x.dim(3), p.downsample_ratio);
    return resample_bilinear(unflatten_pixels(s, h, w), x.dim(2), x.dim(3));
  };
  return op;
}

template <typename T>
ContextOperator<T> make_nonlocal_operator(const NonLocalParams<T>& p) {
  const std::size_t ratio = nonlocal_ratio(p);
  auto embed = [p, ratio](const LinearParams<T>& w) {
    return [p, ratio, w](const Tensor<T>& x) { return linear_rows(pooled_rows(x, ratio, p.downsample), w); };
  };
  ContextOperator<T> op;
  op.w1 = embed(p.theta);
  op.w2 = embed(p.phi);
  op.w3 = embed(p.value);
  op.f = [](const Tensor<T>& a, const Tensor<T>& b) { return attention(a, b); };
  op.g = [](const Tensor<T>& a, const Tensor<T>& v) { return matmul(a, v); };
  op.h = [p, ratio](const Tensor<T>& y, const Tensor<T>& x) {
    auto [h, w] = downsampled_extent(x.dim(2), x.dim(3), ratio);
    return resample_bilinear(unflatten_pixels(linear_rows(y, p.out), h, w), x.dim(2), x.dim(3));
  };
  return op;
}

#define DGCW_INSTANTIATE(T)                                                                                      \
  template ConvContextParams<T> make_conv_context_params(const DgcwConfig&, std::uint64_t, std::string_view);  \
  template Tensor<T> conv_context(const Tensor<T>&, const ConvContextParams<T>&);                              \
  template GapContextParams<T> make_gap_context_params(std::size_t, std::uint64_t, std::string_view);          \
  template Tensor<T> gap_context(const Tensor<T>&, const GapContextParams<T>&);                                \
  template SeContextParams<T> make_se_context_params(std::size_t, std::size_t, std::uint64_t, std::string_view); \
  template Tensor<T> se_context(const Tensor<T>&, const SeContextParams<T>&);                                  \
  template NonLocalParams<T> make_nonlocal_params(std::size_t, NonLocalMode, std::size_t, std::uint64_t,       \
                                                  std::string_view);                                           \
  template Tensor<T> nonlocal_context(const Tensor<T>&, const NonLocalParams<T>&);                             \
  template void register_params(ParamSet<T>&, const std::string&, const ConvContextParams<T>&);                \
  template void register_params(ParamSet<T>&, const std::string&, const GapContextParams<T>&);                 \
  template void register_params(ParamSet<T>&, const std::string&, const SeContextParams<T>&);                  \
  template void register_params(ParamSet<T>&, const std::string&, const NonLocalParams<T>&);                   \
  template ContextOperator<T> make_dgcw_operator(const DgcwParams<T>&);                                        \
  template ContextOperator<T> make_nonlocal_operator(const NonLocalParams<T>&);

DGCW_INSTANTIATE(float)
DGCW_INSTANTIATE(double)

}  // namespace dgcw
