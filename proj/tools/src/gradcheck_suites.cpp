#include <functional>
#include <stdexcept>

#include "dgcw/dgcw.hpp"
#include "dgcw/gradcheck.hpp"
#include "dgcw/layers.hpp"
#include "dgcw/network.hpp"
#include "dgcw/ops.hpp"
#include "dgcw/rng.hpp"
#include "dgcw_cli/commands.hpp"

namespace dgcw::cli {

namespace {

using Fn = std::function<Tensor<double>(const Tensor<double>&)>;

constexpr double kOpsThreshold = 1e-6;
constexpr double kDgcwThreshold = 1e-5;
constexpr double kNetThreshold = 1e-4;

Tensor<double> random(Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  KeyedRng rng(seed, "gradcheck-input");
  Buffer<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>::from(std::move(shape), std::move(v));
}

void fill(Tensor<double>& t, std::uint64_t seed, double lo = -1, double hi = 1) {
  KeyedRng rng(seed, "gradcheck-param");
  for (auto& x : t.mutable_data()) x = rng.uniform(lo, hi);
}

// sum(f(x) * w) with fixed random w, so every output element contributes a
// distinct weight.
Fn weighted(Fn f, const Shape& out_shape, std::uint64_t seed) {
  auto w = random(out_shape, seed);
  return [f = std::move(f), w](const Tensor<double>& x) { return sum_all(mul(f(x), w)); };
}

LabelMap random_labels(std::size_t n, std::size_t h, std::size_t w, std::size_t k, std::uint64_t seed) {
  KeyedRng rng(seed, "gradcheck-labels");
  LabelMap m(n, h, w);
  for (auto& v : m.values) v = static_cast<std::int32_t>(rng.below(k));
  return m;
}

struct Runner {
  std::string target;
  double threshold;
  std::vector<GradcheckCase> cases;

  void elementwise(const std::string& name, const Fn& f, const Tensor<double>& x, double step = 1e-6) {
    record(name, gradcheck_detail<double>(f, x, step).max_rel_error);
  }
  void record(const std::string& name, double error) {
    cases.push_back({target, name, error, threshold, error < threshold});
  }
};

void ops_suite(Runner& r) {
  const Shape s{3, 4};
  auto other = random({4}, 1, 0.5, 1.5);
  r.elementwise("add", weighted([other](const Tensor<double>& x) { return add(x, other); }, s, 2), random(s, 3));
  r.elementwise("sub", weighted([other](const Tensor<double>& x) { return sub(other, x); }, s, 2), random(s, 3));
  r.elementwise("mul", weighted([other](const Tensor<double>& x) { return mul(x, other); }, s, 2), random(s, 3));
  r.elementwise("div_numerator", weighted([other](const Tensor<double>& x) { return div(x, other); }, s, 2),
                random(s, 3));
  r.elementwise("div_denominator", weighted([other](const Tensor<double>& x) { return div(other, x); }, s, 2),
                random(s, 3, 0.5, 2));
  r.elementwise("broadcast_operand", weighted([other](const Tensor<double>& x) { return mul(other, x); }, s, 4),
                random({3, 1}, 5));
  r.elementwise("neg", weighted([](const Tensor<double>& x) { return neg(x); }, s, 2), random(s, 3));
  r.elementwise("square", weighted([](const Tensor<double>& x) { return square(x); }, s, 2), random(s, 3));
  r.elementwise("relu", weighted([](const Tensor<double>& x) { return relu(x); }, s, 2), random(s, 3));
  r.elementwise("tanh", weighted([](const Tensor<double>& x) { return tanh(x); }, s, 2), random(s, 3));
  r.elementwise("exp", weighted([](const Tensor<double>& x) { return exp(x); }, s, 2), random(s, 3));
  r.elementwise("log", weighted([](const Tensor<double>& x) { return log(x); }, s, 2), random(s, 3, 0.5, 2));
  r.elementwise("sigmoid", weighted([](const Tensor<double>& x) { return sigmoid(x); }, s, 2), random(s, 3));

  const Shape t{2, 4, 5};
  auto b = random({2, 5, 3}, 6);
  r.elementwise("matmul_lhs", weighted([b](const Tensor<double>& x) { return matmul(x, b); }, {2, 4, 3}, 7),
                random(t, 8));
  r.elementwise("matmul_both",
                weighted([](const Tensor<double>& x) { return matmul(transpose(x, 1, 2), x); }, {2, 5, 5}, 7),
                random(t, 8));
  r.elementwise("reshape", weighted([](const Tensor<double>& x) { return reshape(x, {5, 8}); }, {5, 8}, 7),
                random(t, 8));
  r.elementwise("permute",
                weighted([](const Tensor<double>& x) { return permute(x, {2, 0, 1}); }, {5, 2, 4}, 7), random(t, 8));
  for (auto [kind, name] : {std::pair{ReduceKind::Sum, "reduce_sum"}, std::pair{ReduceKind::Mean, "reduce_mean"},
                            std::pair{ReduceKind::Max, "reduce_max"}, std::pair{ReduceKind::Variance, "reduce_variance"}})
    r.elementwise(name, weighted([kind](const Tensor<double>& x) { return reduce(kind, x, 1); }, {2, 5}, 7),
                  random(t, 8));
  r.elementwise("softmax", weighted([](const Tensor<double>& x) { return softmax(x, 2); }, t, 7), random(t, 8));
  r.elementwise("concat",
                weighted([](const Tensor<double>& x) { return concat<double>({x, square(x)}, 1); }, {2, 8, 5}, 7),
                random(t, 8));
  r.elementwise("flip", weighted([](const Tensor<double>& x) { return flip(x, 2); }, t, 7), random(t, 8));

  auto lin = make_linear<double>(4, 3, 9, "lin");
  fill(lin.bias, 10);
  const Shape img{2, 4, 3, 2};
  r.elementwise("linear_1x1_input", weighted([lin](const Tensor<double>& x) { return linear_1x1(x, lin); },
                                             {2, 3, 3, 2}, 11),
                random(img, 12));
  r.elementwise("linear_1x1_weight", weighted([lin, x = random(img, 12)](const Tensor<double>& w) {
                  return linear_1x1(x, LinearParams<double>{w, lin.bias});
                }, {2, 3, 3, 2}, 11), lin.weight);

  auto conv = make_conv2d<double>(2, 3, 3, 2, 1, 13, "conv");
  conv.padding = 1;
  fill(conv.bias, 14);
  auto cx = random({1, 2, 5, 6}, 15);
  const Shape cout{1, 3, 3, 3};
  r.elementwise("conv2d_input", weighted([conv](const Tensor<double>& x) { return conv2d(x, conv); }, cout, 16),
                cx);
  r.elementwise("conv2d_weight", weighted([conv, cx](const Tensor<double>& w) {
                  auto p = conv;
                  p.weight = w;
                  return conv2d(cx, p);
                }, cout, 16), conv.weight);
  r.elementwise("conv2d_bias", weighted([conv, cx](const Tensor<double>& b) {
                  auto p = conv;
                  p.bias = b;
                  return conv2d(cx, p);
                }, cout, 16), conv.bias);
  auto dil = make_conv2d<double>(2, 2, 3, 1, 2, 17, "dil");
  dil.padding = 2;
  r.elementwise("conv2d_dilated", weighted([dil](const Tensor<double>& x) { return conv2d(x, dil); },
                                           {1, 2, 5, 6}, 18), cx);

  auto px = random({1, 2, 5, 4}, 19);
  r.elementwise("global_avg_pool", weighted([](const Tensor<double>& x) { return global_avg_pool(x); },
                                            {1, 2, 1, 1}, 20), px);
  r.elementwise("adaptive_avg_pool", weighted([](const Tensor<double>& x) { return adaptive_avg_pool(x, 3, 2); },
                                              {1, 2, 3, 2}, 20), px);
  r.elementwise("bilinear_up", weighted([](const Tensor<double>& x) { return resample_bilinear(x, 9, 7); },
                                        {1, 2, 9, 7}, 20), px);
  r.elementwise("bilinear_down", weighted([](const Tensor<double>& x) { return resample_bilinear(x, 2, 3); },
                                          {1, 2, 2, 3}, 20), px);

  auto bn = make_batchnorm<double>(2);
  fill(bn.scale, 21, 0.5, 1.5);
  fill(bn.shift, 22);
  auto bx = random({2, 2, 3, 3}, 23);
  r.elementwise("batchnorm_train_input", weighted([bn](const Tensor<double>& x) {
                  auto p = bn;
                  return batchnorm(x, p, true);
                }, bx.shape(), 24), bx, 1e-5);
  r.elementwise("batchnorm_scale", weighted([bn, bx](const Tensor<double>& s) {
                  auto p = bn;
                  p.scale = s;
                  return batchnorm(bx, p, true);
                }, bx.shape(), 24), bn.scale);
  r.elementwise("batchnorm_eval_input", weighted([bn](const Tensor<double>& x) {
                  auto p = bn;
                  return batchnorm(x, p, false);
                }, bx.shape(), 24), bx);

  auto labels = random_labels(2, 3, 4, 3, 25);
  labels.values[5] = kIgnoreIndex;
  r.elementwise("cross_entropy", [labels](const Tensor<double>& x) { return cross_entropy(x, labels); },
                random({2, 3, 3, 4}, 26, -2, 2));
}

DgcwParams<double> random_dgcw(std::size_t c, NormKind norm, std::size_t ratio, std::uint64_t seed,
                               std::size_t block) {
  DgcwConfig cfg;
  cfg.channels = c;
  cfg.norm = norm;
  cfg.downsample_ratio = ratio;
  cfg.block = block;
  cfg.zero_init_g2 = false;
  auto p = make_dgcw_params<double>(cfg, seed, "dgcw");
  std::uint64_t k = seed * 16;
  for (auto* b : {&p.wq.bias, &p.wk.bias, &p.wv.bias, &p.g1.bias, &p.g2.bias}) fill(*b, ++k);
  return p;
}

void dgcw_suite(Runner& r) {
  std::uint64_t seed = 100;
  for (auto impl : {DgcwImpl::Naive, DgcwImpl::Fused}) {
    for (auto norm : {NormKind::Dbs, NormKind::Softmax, NormKind::Tanh}) {
      const std::string tag = std::string(dgcw_impl_name(impl)) + "_" + norm_kind_name(norm);
      auto p = random_dgcw(3, norm, 2, ++seed, 4);
      auto f = random({1, 3, 6, 6}, ++seed);  // P = 9 after downsampling
      auto w = random(f.shape(), ++seed);
      auto forward = [impl, w](const Tensor<double>& x, const DgcwParams<double>& q) {
        return sum_all(mul(dgcw_forward(x, q, impl), w));
      };
      r.elementwise(tag + "_input", [p, forward](const Tensor<double>& x) { return forward(x, p); }, f, 1e-4);
      using Member = LinearParams<double> DgcwParams<double>::*;
      for (auto [member, name] : {std::pair<Member, const char*>{&DgcwParams<double>::wq, "wq"},
                                  {&DgcwParams<double>::wk, "wk"}, {&DgcwParams<double>::wv, "wv"},
                                  {&DgcwParams<double>::g1, "g1"}, {&DgcwParams<double>::g2, "g2"}}) {
        r.elementwise(tag + "_" + name + "_weight", [p, f, forward, member](const Tensor<double>& x) {
          auto q = p;
          (q.*member).weight = x;
          return forward(f, q);
        }, (p.*member).weight, 1e-4);
        r.elementwise(tag + "_" + name + "_bias", [p, f, forward, member](const Tensor<double>& x) {
          auto q = p;
          (q.*member).bias = x;
          return forward(f, q);
        }, (p.*member).bias, 1e-4);
      }
    }
  }
}

// Micro network without batch norm. Biases are randomized so no ReLU input
// sits exactly on the kink, and the normwise error is used because
// individual gradient entries can be near zero.
void net_suite(Runner& r) {
  NetworkConfig c;
  c.class_count = 3;
  c.backbone_widths = {4, 4, 8, 8};
  c.reduced_channels = 4;
  c.batchnorm = false;
  c.context = ContextKind::Dgcw;
  c.dgcw.downsample_ratio = 1;
  c.dgcw.zero_init_g2 = false;
  DgcwNet<double> net(c, 12);
  KeyedRng bias_rng(5, "bias");
  for (const auto& e : net.params().entries())
    if (e.role == ParamRole::Bias) {
      auto t = e.tensor;
      for (auto& v : t.mutable_data()) v = bias_rng.uniform(-0.2, 0.2);
    }
  auto img = random({1, 3, 16, 16}, 13, 0, 1);
  auto labels = random_labels(1, 16, 16, 3, 14);
  Fn of_image = [&](const Tensor<double>& x) { return total_loss(net.forward(x, true), labels, 0.4).total; };
  r.record("image", gradcheck_detail<double>(of_image, img, 1e-5, 48).normwise_rel_error);
  Fn of_params = [&](const Tensor<double>&) { return total_loss(net.forward(img, true), labels, 0.4).total; };
  for (const auto& e : net.params().entries())
    r.record(e.name, gradcheck_detail<double>(of_params, e.tensor, 1e-5, 24).normwise_rel_error);
}

}  // namespace

std::vector<GradcheckCase> run_gradcheck_suite(std::string_view target) {
  if (target == "ops") {
    Runner r{"ops", kOpsThreshold, {}};
    ops_suite(r);
    return r.cases;
  }
  if (target == "dgcw") {
    Runner r{"dgcw", kDgcwThreshold, {}};
    dgcw_suite(r);
    return r.cases;
  }
  if (target == "net") {
    Runner r{"net", kNetThreshold, {}};
    net_suite(r);
    return r.cases;
  }
  throw ConfigError("gradcheck.target must be ops, dgcw, net or all, got '" + std::string(target) + "'");
}

}  // namespace dgcw::cli
