#include "dgcw/network.hpp"

#include <algorithm>
#include <stdexcept>

#include "dgcw/ops.hpp"

namespace dgcw {

const char* head_kind_name(HeadKind k) {
  switch (k) {
    case HeadKind::None: return "none";
    case HeadKind::Ppm: return "ppm";
    case HeadKind::Aspp: return "aspp";
  }
  return "?";
}

HeadKind parse_head_kind(std::string_view s) {
  if (s == "none") return HeadKind::None;
  if (s == "ppm") return HeadKind::Ppm;
  if (s == "aspp") return HeadKind::Aspp;
  throw std::invalid_argument("unknown head '" + std::string(s) + "' (none|ppm|aspp)");
}

const char* context_kind_name(ContextKind k) {
  switch (k) {
    case ContextKind::None: return "none";
    case ContextKind::Conv: return "conv";
    case ContextKind::Gap: return "gap";
    case ContextKind::Se: return "se";
    case ContextKind::NlH: return "nlh";
    case ContextKind::NlD: return "nld";
    case ContextKind::Dgcw: return "dgcw";
  }
  return "?";
}

ContextKind parse_context_kind(std::string_view s) {
  for (auto k : {ContextKind::None, ContextKind::Conv, ContextKind::Gap, ContextKind::Se, ContextKind::NlH,
                 ContextKind::NlD, ContextKind::Dgcw})
    if (s == context_kind_name(k)) return k;
  throw std::invalid_argument("unknown context '" + std::string(s) + "' (none|conv|gap|se|nlh|nld|dgcw)");
}

void NetworkConfig::validate() const {
  if (in_channels == 0) throw std::invalid_argument("in_channels must be positive");
  if (class_count < 2) throw std::invalid_argument("class_count must be at least 2");
  if (class_count > 255) throw std::invalid_argument("class_count must leave 255 free as the ignore label");
  if (backbone_widths.size() != 4) throw std::invalid_argument("backbone_widths needs exactly 4 entries");
  for (auto w : backbone_widths)
    if (w == 0) throw std::invalid_argument("backbone widths must be positive");
  if (reduced_channels < 4) throw std::invalid_argument("reduced_channels must be at least 4");
  if (!(aux_weight >= 0)) throw std::invalid_argument("aux_weight must be non-negative");
  if (head == HeadKind::Aspp) {
    if (aspp_rates.size() != 3) throw std::invalid_argument("aspp_rates needs exactly 3 entries");
    for (auto r : aspp_rates)
      if (r == 0) throw std::invalid_argument("aspp rates must be positive");
    if (aspp_out_channels == 0) throw std::invalid_argument("aspp_out_channels must be positive");
  }
  if (se_reduction == 0) throw std::invalid_argument("se_reduction must be positive");
  if (dgcw.downsample_ratio == 0 || dgcw.block == 0) throw std::invalid_argument("dgcw ratio and block must be positive");
}

namespace {

template <typename T>
ConvBn<T> make_conv_bn(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t dilation,
                       std::uint64_t seed, const std::string& name, bool use_bn) {
  ConvBn<T> p;
  p.conv = make_conv2d<T>(in, out, kernel, stride, dilation, seed, name + ".conv", !use_bn);
  if (use_bn) p.bn = make_batchnorm<T>(out);
  p.use_bn = use_bn;
  return p;
}

template <typename T>
void add_conv_bn(ParamSet<T>& set, const std::string& name, const ConvBn<T>& p) {
  set.add(name + ".conv", p.conv);
  if (p.use_bn) set.add(name + ".bn", p.bn);
}

struct StageLayout {
  std::size_t stride, dilation;
};

constexpr StageLayout kStages[4] = {{2, 1}, {2, 1}, {1, 2}, {1, 4}};

}  // namespace

template <typename T>
Tensor<T> conv_bn(const Tensor<T>& x, ConvBn<T>& p, bool training, bool relu_after) {
  auto y = conv2d(x, p.conv);
  if (p.use_bn) y = batchnorm(y, p.bn, training);
  return relu_after ? relu(y) : y;
}

template <typename T>
BackboneOutput<T> backbone_forward(const Tensor<T>& image, BackboneParams<T>& p, bool training) {
  if (image.rank() != 4) throw ShapeError("backbone expects N x C x H x W, got " + shape_str(image.shape()));
  if (image.dim(2) % 8 != 0 || image.dim(3) % 8 != 0)
    throw ShapeError("image extents must be divisible by 8, got " + shape_str(image.shape()));
  auto x = conv_bn(image, p.stem, training, true);
  BackboneOutput<T> out;
  for (std::size_t s = 0; s < p.stages.size(); ++s) {
    auto& b = p.stages[s];
    auto y = conv_bn(conv_bn(x, b.conv1, training, true), b.conv2, training, false);
    auto shortcut = b.has_projection ? conv_bn(x, b.projection, training, false) : x;
    x = relu(add(y, shortcut));
    if (s == 2) out.stage3 = x;
  }
  out.final = x;
  return out;
}

template <typename T>
Tensor<T> ppm_head(const Tensor<T>& f, PpmParams<T>& p, bool training) {
  if (f.rank() != 4) throw ShapeError("ppm_head expects N x C x H x W");
  const std::size_t h = f.dim(2), w = f.dim(3);
  const std::size_t largest = *std::max_element(p.bins.begin(), p.bins.end());
  if (h < largest || w < largest)
    throw ShapeError("ppm_head needs extents of at least " + std::to_string(largest) + ", got " + shape_str(f.shape()));
  std::vector<Tensor<T>> parts{f};
  for (std::size_t b = 0; b < p.bins.size(); ++b) {
    auto pooled = adaptive_avg_pool(f, p.bins[b], p.bins[b]);
    parts.push_back(resample_bilinear(conv_bn(pooled, p.branches[b], training, true), h, w));
  }
  return concat(parts, 1);
}

template <typename T>
Tensor<T> aspp_head(const Tensor<T>& f, AsppParams<T>& p, bool training) {
  if (f.rank() != 4) throw ShapeError("aspp_head expects N x C x H x W");
  const std::size_t h = f.dim(2), w = f.dim(3);
  std::vector<Tensor<T>> parts;
  parts.push_back(resample_bilinear(conv_bn(global_avg_pool(f), p.pooled, training, true), h, w));
  parts.push_back(conv_bn(f, p.point, training, true));
  for (auto& d : p.dilated) parts.push_back(conv_bn(f, d, training, true));
  return conv2d(concat(parts, 1), p.fuse);
}

template <typename T>
LossTerms<T> total_loss(const ForwardOutput<T>& out, const LabelMap& labels, double aux_weight,
                        const std::vector<std::uint8_t>* main_keep) {
  LossTerms<T> t;
  t.main = cross_entropy(out.main_logits, labels, kIgnoreIndex, main_keep);
  t.aux = cross_entropy(out.aux_logits, labels);
  t.total = aux_weight == 0 ? t.main : add(t.main, mul(t.aux, static_cast<T>(aux_weight)));
  return t;
}

template <typename T>
DgcwNet<T>::DgcwNet(NetworkConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const bool bn = cfg_.batchnorm;
  const auto& wd = cfg_.backbone_widths;

  backbone_.stem = make_conv_bn<T>(cfg_.in_channels, wd[0], 3, 2, 1, seed, "backbone.stem", bn);
  add_conv_bn(params_, "backbone.stem", backbone_.stem);
  std::size_t cin = wd[0];
  for (std::size_t s = 0; s < 4; ++s) {
    const std::string name = "backbone.stage" + std::to_string(s + 1);
    const auto [stride, dil] = kStages[s];
    ResidualBlock<T> b;
    b.conv1 = make_conv_bn<T>(cin, wd[s], 3, stride, dil, seed, name + ".conv1", bn);
    b.conv2 = make_conv_bn<T>(wd[s], wd[s], 3, 1, dil, seed, name + ".conv2", bn);
    add_conv_bn(params_, name + ".conv1", b.conv1);
    add_conv_bn(params_, name + ".conv2", b.conv2);
    if (cin != wd[s] || stride != 1) {
      b.has_projection = true;
      b.projection = make_conv_bn<T>(cin, wd[s], 1, stride, 1, seed, name + ".proj", bn);
      add_conv_bn(params_, name + ".proj", b.projection);
    }
    backbone_.stages.push_back(std::move(b));
    cin = wd[s];
  }

  std::size_t head_out = wd[3];
  if (cfg_.head == HeadKind::Ppm) {
    const std::size_t cb = cfg_.ppm_branch_channels ? cfg_.ppm_branch_channels : std::max<std::size_t>(1, wd[3] / 4);
    for (std::size_t b = 0; b < ppm_.bins.size(); ++b) {
      const std::string name = "head.ppm.branch" + std::to_string(b);
      ppm_.branches.push_back(make_conv_bn<T>(wd[3], cb, 1, 1, 1, seed, name, bn));
      add_conv_bn(params_, name, ppm_.branches.back());
    }
    head_out = wd[3] + ppm_.bins.size() * cb;
  } else if (cfg_.head == HeadKind::Aspp) {
    const std::size_t co = cfg_.aspp_out_channels;
    aspp_.pooled = make_conv_bn<T>(wd[3], co, 1, 1, 1, seed, "head.aspp.pooled", bn);
    add_conv_bn(params_, "head.aspp.pooled", aspp_.pooled);
    aspp_.point = make_conv_bn<T>(wd[3], co, 1, 1, 1, seed, "head.aspp.point", bn);
    add_conv_bn(params_, "head.aspp.point", aspp_.point);
    for (std::size_t r = 0; r < cfg_.aspp_rates.size(); ++r) {
      const std::string name = "head.aspp.rate" + std::to_string(r);
      aspp_.dilated.push_back(make_conv_bn<T>(wd[3], co, 3, 1, cfg_.aspp_rates[r], seed, name, bn));
      add_conv_bn(params_, name, aspp_.dilated.back());
    }
    aspp_.fuse = make_conv2d<T>(5 * co, co, 1, 1, 1, seed, "head.aspp.fuse", true);
    params_.add("head.aspp.fuse", aspp_.fuse);
    head_out = co;
  }

  const std::size_t c = cfg_.reduced_channels;
  reduce_ = make_conv_bn<T>(head_out, c, 3, 1, 1, seed, "reduce", bn);
  add_conv_bn(params_, "reduce", reduce_);

  DgcwConfig dc = cfg_.dgcw;
  dc.channels = c;
  switch (cfg_.context) {
    case ContextKind::None: break;
    case ContextKind::Dgcw:
      dgcw_ = make_dgcw_params<T>(dc, seed, "context");
      register_params(params_, "context", dgcw_);
      break;
    case ContextKind::Conv:
      conv_ctx_ = make_conv_context_params<T>(dc, seed, "context");
      register_params(params_, "context", conv_ctx_);
      break;
    case ContextKind::Gap:
      gap_ctx_ = make_gap_context_params<T>(c, seed, "context");
      register_params(params_, "context", gap_ctx_);
      break;
    case ContextKind::Se:
      se_ctx_ = make_se_context_params<T>(c, cfg_.se_reduction, seed, "context");
      register_params(params_, "context", se_ctx_);
      break;
    case ContextKind::NlH:
    case ContextKind::NlD:
      nl_ctx_ = make_nonlocal_params<T>(c, cfg_.context == ContextKind::NlH ? NonLocalMode::Hold : NonLocalMode::Downsample,
                                        dc.downsample_ratio, seed, "context");
      nl_ctx_.downsample = dc.downsample;
      register_params(params_, "context", nl_ctx_);
      break;
  }

  classifier_ = make_conv2d<T>(c, cfg_.class_count, 1, 1, 1, seed, "classifier", true);
  params_.add("classifier", classifier_);
  aux_conv_ = make_conv_bn<T>(wd[2], c, 3, 1, 1, seed, "aux.conv", bn);
  add_conv_bn(params_, "aux.conv", aux_conv_);
  aux_classifier_ = make_conv2d<T>(c, cfg_.class_count, 1, 1, 1, seed, "aux.classifier", true);
  params_.add("aux.classifier", aux_classifier_);
}

template <typename T>
Tensor<T> DgcwNet<T>::context(const Tensor<T>& x) const {
  switch (cfg_.context) {
    case ContextKind::None: return x;
    case ContextKind::Dgcw: return dgcw_forward(x, dgcw_, cfg_.dgcw_impl);
    case ContextKind::Conv: return conv_context(x, conv_ctx_);
    case ContextKind::Gap: return gap_context(x, gap_ctx_);
    case ContextKind::Se: return se_context(x, se_ctx_);
    case ContextKind::NlH:
    case ContextKind::NlD: return nonlocal_context(x, nl_ctx_);
  }
  return x;
}

template <typename T>
ForwardOutput<T> DgcwNet<T>::forward(const Tensor<T>& image, bool training) {
  if (image.rank() != 4 || image.dim(1) != cfg_.in_channels)
    throw ShapeError("network expects N x " + std::to_string(cfg_.in_channels) + " x H x W, got " +
                     shape_str(image.shape()));
  const std::size_t h = image.dim(2), w = image.dim(3);
  auto bb = backbone_forward(image, backbone_, training);
  auto x = bb.final;
  if (cfg_.head == HeadKind::Ppm) x = ppm_head(x, ppm_, training);
  if (cfg_.head == HeadKind::Aspp) x = aspp_head(x, aspp_, training);
  x = conv_bn(x, reduce_, training, true);
  ForwardOutput<T> out;
  out.features = context(x);
  out.main_logits = resample_bilinear(conv2d(out.features, classifier_), h, w);
  auto aux = conv2d(conv_bn(bb.stage3, aux_conv_, training, true), aux_classifier_);
  out.aux_logits = resample_bilinear(aux, h, w);
  return out;
}

#define DGCW_INSTANTIATE(T)                                                                              \
  template Tensor<T> conv_bn(const Tensor<T>&, ConvBn<T>&, bool, bool);                                  \
  template BackboneOutput<T> backbone_forward(const Tensor<T>&, BackboneParams<T>&, bool);               \
  template Tensor<T> ppm_head(const Tensor<T>&, PpmParams<T>&, bool);                                    \
  template Tensor<T> aspp_head(const Tensor<T>&, AsppParams<T>&, bool);                                  \
  template LossTerms<T> total_loss(const ForwardOutput<T>&, const LabelMap&, double,                     \
                                   const std::vector<std::uint8_t>*);                                    \
  template class DgcwNet<T>;

DGCW_INSTANTIATE(float)
DGCW_INSTANTIATE(double)

}  // namespace dgcw
