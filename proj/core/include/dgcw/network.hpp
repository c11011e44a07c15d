#pragma once

// DGCWNet: residual backbone at output stride 8, optional PPM/ASPP head,
// channel reduction, a context module slot, classifier and auxiliary head.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dgcw/baselines.hpp"
#include "dgcw/dgcw.hpp"
#include "dgcw/labels.hpp"
#include "dgcw/layers.hpp"
#include "dgcw/params.hpp"
#include "dgcw/tensor.hpp"

namespace dgcw {

enum class HeadKind { None, Ppm, Aspp };
enum class ContextKind { None, Conv, Gap, Se, NlH, NlD, Dgcw };

const char* head_kind_name(HeadKind k);
HeadKind parse_head_kind(std::string_view s);
const char* context_kind_name(ContextKind k);
ContextKind parse_context_kind(std::string_view s);

struct NetworkConfig {
  std::size_t in_channels = 3;
  std::size_t class_count = 4;
  std::vector<std::size_t> backbone_widths{16, 32, 64, 64};
  std::size_t reduced_channels = 32;
  HeadKind head = HeadKind::None;
  ContextKind context = ContextKind::None;
  DgcwConfig dgcw;  // channels follow reduced_channels
  DgcwImpl dgcw_impl = DgcwImpl::Fused;
  double aux_weight = 0.4;
  std::vector<std::size_t> aspp_rates{2, 4, 6};
  std::size_t aspp_out_channels = 64;
  std::size_t ppm_branch_channels = 0;  // 0 means input channels / 4
  std::size_t se_reduction = 4;
  bool batchnorm = true;  // false: plain biased convs, used for gradient checks

  // Throws std::invalid_argument.
  void validate() const;
};

// Convolution followed by optional batch norm; the conv carries a bias only
// when batch norm is off.
template <typename T>
struct ConvBn {
  Conv2dParams<T> conv;
  BatchNormParams<T> bn;
  bool use_bn = true;
};

template <typename T>
Tensor<T> conv_bn(const Tensor<T>& x, ConvBn<T>& p, bool training, bool relu_after);

template <typename T>
struct ResidualBlock {
  ConvBn<T> conv1, conv2;
  bool has_projection = false;
  ConvBn<T> projection;  // 1x1 shortcut when shape changes
};

template <typename T>
struct BackboneParams {
  ConvBn<T> stem;                        // 3x3, stride 2
  std::vector<ResidualBlock<T>> stages;  // strides 2, 2, 1, 1; dilations 1, 1, 2, 4
};

template <typename T>
struct BackboneOutput {
  Tensor<T> stage3;
  Tensor<T> final;
};

template <typename T>
BackboneOutput<T> backbone_forward(const Tensor<T>& image, BackboneParams<T>& p, bool training);

template <typename T>
struct PpmParams {
  std::vector<std::size_t> bins{1, 2, 3, 6};
  std::vector<ConvBn<T>> branches;
};

// [F, up(conv(pool_b(F))) for b in bins] along channels.
template <typename T>
Tensor<T> ppm_head(const Tensor<T>& f, PpmParams<T>& p, bool training);

template <typename T>
struct AsppParams {
  ConvBn<T> pooled;                 // global average pool, 1x1
  ConvBn<T> point;                  // 1x1
  std::vector<ConvBn<T>> dilated;   // 3x3 at each rate
  Conv2dParams<T> fuse;             // 1x1 over the five concatenated branches
};

template <typename T>
Tensor<T> aspp_head(const Tensor<T>& f, AsppParams<T>& p, bool training);

template <typename T>
struct ForwardOutput {
  Tensor<T> main_logits;  // N x K x H x W
  Tensor<T> aux_logits;   // N x K x H x W
  Tensor<T> features;     // context module output, N x reduced x H/8 x W/8
};

template <typename T>
struct LossTerms {
  Tensor<T> total, main, aux;
};

// cross_entropy(main, keep) + aux_weight * cross_entropy(aux)
template <typename T>
LossTerms<T> total_loss(const ForwardOutput<T>& out, const LabelMap& labels, double aux_weight,
                        const std::vector<std::uint8_t>* main_keep = nullptr);

template <typename T>
class DgcwNet {
 public:
  // Parameters are keyed by (seed, name), so two networks that differ only in
  // the context module share every other parameter value.
  DgcwNet(NetworkConfig cfg, std::uint64_t seed);

  ForwardOutput<T> forward(const Tensor<T>& image, bool training);

  const NetworkConfig& config() const { return cfg_; }
  const ParamSet<T>& params() const { return params_; }

  DgcwParams<T>& dgcw_params() { return dgcw_; }

 private:
  Tensor<T> context(const Tensor<T>& x) const;

  NetworkConfig cfg_;
  BackboneParams<T> backbone_;
  PpmParams<T> ppm_;
  AsppParams<T> aspp_;
  ConvBn<T> reduce_;
  DgcwParams<T> dgcw_;
  ConvContextParams<T> conv_ctx_;
  GapContextParams<T> gap_ctx_;
  SeContextParams<T> se_ctx_;
  NonLocalParams<T> nl_ctx_;
  Conv2dParams<T> classifier_;
  ConvBn<T> aux_conv_;
  Conv2dParams<T> aux_classifier_;
  ParamSet<T> params_;
};

}  // namespace dgcw
