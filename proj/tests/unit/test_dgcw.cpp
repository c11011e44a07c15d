#include <gtest/gtest.h>

#include <cmath>

#include "dgcw/dgcw.hpp"
#include "dgcw/gradcheck.hpp"
#include "dgcw/ops.hpp"
#include "test_util.hpp"

using namespace dgcw;
using dgcw::test::max_abs_diff;
using dgcw::test::random_tensor;
using dgcw::test::rel_diff;

namespace {

void assign(Tensor<double>& t, const std::vector<double>& v) {
  auto d = t.mutable_data();
  ASSERT_EQ(d.size(), v.size());
  std::copy(v.begin(), v.end(), d.begin());
}

void randomize(Tensor<double>& t, std::uint64_t seed) {
  auto r = random_tensor(t.shape(), seed);
  std::copy(r.data().begin(), r.data().end(), t.mutable_data().begin());
}

DgcwParams<double> random_params(std::size_t c, NormKind norm, std::size_t ratio, std::uint64_t seed,
                                 std::size_t block = 16) {
  DgcwConfig cfg;
  cfg.channels = c;
  cfg.norm = norm;
  cfg.downsample_ratio = ratio;
  cfg.block = block;
  cfg.zero_init_g2 = false;
  auto p = make_dgcw_params<double>(cfg, seed, "dgcw");
  // Nonzero biases so every bias path is exercised.
  randomize(p.wq.bias, seed + 1);
  randomize(p.wk.bias, seed + 2);
  randomize(p.wv.bias, seed + 3);
  randomize(p.g1.bias, seed + 4);
  randomize(p.g2.bias, seed + 5);
  return p;
}

std::vector<Tensor<double>*> param_tensors(DgcwParams<double>& p) {
  return {&p.wq.weight, &p.wq.bias, &p.wk.weight, &p.wk.bias, &p.wv.weight,
          &p.wv.bias,   &p.g1.weight, &p.g1.bias, &p.g2.weight, &p.g2.bias};
}

// g(x) = g2(relu(g1(x))) for one channel vector.
std::vector<double> apply_g(const DgcwParams<double>& p, const std::vector<double>& x) {
  const std::size_t c = x.size(), cg = p.g1.weight.dim(0);
  std::vector<double> hidden(cg), out(c);
  for (std::size_t h = 0; h < cg; ++h) {
    double s = p.g1.bias.data()[h];
    for (std::size_t k = 0; k < c; ++k) s += p.g1.weight.at({h, k}) * x[k];
    hidden[h] = std::max(s, 0.0);
  }
  for (std::size_t o = 0; o < c; ++o) {
    double s = p.g2.bias.data()[o];
    for (std::size_t h = 0; h < cg; ++h) s += p.g2.weight.at({o, h}) * hidden[h];
    out[o] = s;
  }
  return out;
}

}  // namespace

TEST(QkvProject, IdentityWeightsFlatten) {
  DgcwConfig cfg;
  cfg.channels = 3;
  auto p = make_dgcw_params<double>(cfg, 1, "d");
  const std::vector<double> eye{1, 0, 0, 0, 1, 0, 0, 0, 1};
  for (auto* l : {&p.wq, &p.wk, &p.wv}) assign(l->weight, eye);
  auto d = random_tensor({2, 3, 2, 3}, 2);
  auto qkv = qkv_project(d, p);
  auto flat = flatten_pixels(d);
  EXPECT_EQ(flat.shape(), (Shape{2, 6, 3}));
  for (auto* t : {&qkv.q, &qkv.k, &qkv.v}) EXPECT_TRUE(dgcw::test::bit_equal(*t, flat));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(flat.at({n, i * 3 + j, c}), d.at({n, c, i, j}));
}

TEST(QkvProject, SharedParametersAndLayerOracle) {
  auto p = random_params(4, NormKind::Dbs, 1, 3);
  p.wk = LinearParams<double>{p.wq.weight.clone(), p.wq.bias.clone()};
  auto d = random_tensor({1, 4, 3, 3}, 4);
  auto qkv = qkv_project(d, p);
  EXPECT_TRUE(dgcw::test::bit_equal(qkv.q, qkv.k));
  EXPECT_LT(max_abs_diff(qkv.v, flatten_pixels(linear_1x1(d, p.wv))), 1e-15);
  EXPECT_THROW(qkv_project(random_tensor({1, 3, 3, 3}, 5), p), ShapeError);
}

TEST(ChannelDistance, HandCasesAndLoopOracle) {
  auto q = Tensor<double>::from({1, 1, 2}, std::vector<double>{1, 2});
  auto k = Tensor<double>::from({1, 1, 2}, std::vector<double>{0, 4});
  auto m = channel_distance(q, k);
  EXPECT_EQ(m.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_EQ(m.data()[0], 1.0);
  EXPECT_EQ(m.data()[1], 4.0);

  auto qr = random_tensor({1, 2, 3}, 6);
  auto kr = random_tensor({1, 2, 3}, 7);
  auto mr = channel_distance(qr, kr);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t c = 0; c < 3; ++c) {
        const double diff = qr.at({0, i, c}) - kr.at({0, j, c});
        EXPECT_EQ(mr.at({0, i, j, c}), diff * diff);
      }

  auto self = channel_distance(qr, qr);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(self.at({0, i, i, c}), 0.0);
}

TEST(ChannelDistance, NonNegative) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto m = channel_distance(random_tensor({2, 5, 4}, s, -10, 10), random_tensor({2, 5, 4}, s + 100, -10, 10));
    for (auto v : m.data()) EXPECT_GE(v, 0.0);
  }
}

TEST(NormalizeWeights, HandCases) {
  auto m = Tensor<double>::from({1, 1, 1, 2}, std::vector<double>{1, 3});
  auto dbs = normalize_weights(m, NormKind::Dbs, 1e-12);
  EXPECT_NEAR(dbs.data()[0], 0.25, 1e-12);
  EXPECT_NEAR(dbs.data()[1], 0.75, 1e-12);
  auto zero = Tensor<double>::zeros({1, 1, 1, 2});
  auto sm = normalize_weights(zero, NormKind::Softmax, 0.0);
  EXPECT_EQ(sm.data()[0], 0.5);
  EXPECT_EQ(sm.data()[1], 0.5);
  auto dz = normalize_weights(zero, NormKind::Dbs, 1e-12);
  EXPECT_EQ(dz.data()[0], 0.0);
  EXPECT_EQ(dz.data()[1], 0.0);
  auto th = normalize_weights(m, NormKind::Tanh, 0.0);
  EXPECT_EQ(th.data()[0], std::tanh(1.0));
  EXPECT_EQ(th.data()[1], std::tanh(3.0));
}

TEST(NormalizeWeights, DbsRowSumBounds) {
  auto m = square(random_tensor({1, 4, 4, 6}, 8, -2, 2));
  auto w = normalize_weights(m, NormKind::Dbs, 1e-12);
  for (std::size_t pair = 0; pair < 16; ++pair) {
    double s = 0, msum = 0;
    for (std::size_t c = 0; c < 6; ++c) {
      s += w.data()[pair * 6 + c];
      msum += m.data()[pair * 6 + c];
    }
    EXPECT_GE(s, 0.0);
    EXPECT_LT(s, 1.0 + 1e-15);
    if (msum > 1e-6) EXPECT_NEAR(s, 1.0, 1e-10);
  }
}

TEST(NormalizeWeights, SoftmaxAndTanhRanges) {
  auto m = square(random_tensor({1, 3, 3, 5}, 9, -2, 2));
  auto sm = normalize_weights(m, NormKind::Softmax, 0.0);
  for (std::size_t pair = 0; pair < 9; ++pair) {
    double s = 0;
    for (std::size_t c = 0; c < 5; ++c) s += sm.data()[pair * 5 + c];
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
  auto th = normalize_weights(m, NormKind::Tanh, 0.0);
  for (auto v : th.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(ZeroDistanceLaw, EqualProjectionsGiveZeroDbsWeights) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto p = random_params(6, NormKind::Dbs, 1, 10 + s);
    p.wk = LinearParams<double>{p.wq.weight.clone(), p.wq.bias.clone()};
    auto d = random_tensor({1, 6, 3, 3}, 20 + s);
    auto qkv = qkv_project(d, p);
    auto w = normalize_weights(channel_distance(qkv.q, qkv.k), NormKind::Dbs, default_dbs_epsilon<double>());
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(w.at({0, i, i, c}), 0.0);
  }
  // Two pixels with identical features also give Q_i = K_j off the diagonal.
  auto p = random_params(3, NormKind::Dbs, 1, 30);
  p.wk = LinearParams<double>{p.wq.weight.clone(), p.wq.bias.clone()};
  auto d = Tensor<double>::from({1, 3, 1, 2}, std::vector<double>{0.5, 0.5, -1, -1, 2, 2});
  auto qkv = qkv_project(d, p);
  auto w = normalize_weights(channel_distance(qkv.q, qkv.k), NormKind::Dbs, default_dbs_epsilon<double>());
  for (auto v : w.data()) EXPECT_EQ(v, 0.0);
}

TEST(Relationship, ZeroG2AnnihilatesAndZeroWeightGivesBiasVector) {
  auto p = random_params(3, NormKind::Dbs, 1, 40);
  auto v = random_tensor({1, 4, 3}, 41);
  auto w0 = Tensor<double>::zeros({1, 4, 4, 3});
  auto r0 = relationship(w0, v, p);
  const auto expected = apply_g(p, {0, 0, 0});
  for (std::size_t pair = 0; pair < 16; ++pair)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(r0.data()[pair * 3 + c], expected[c], 1e-15);
  assign(p.g2.weight, std::vector<double>(9, 0.0));
  assign(p.g2.bias, {0, 0, 0});
  auto annihilated = relationship(random_tensor({1, 4, 4, 3}, 42), v, p);
  for (auto x : annihilated.data()) EXPECT_EQ(x, 0.0);
}

TEST(Relationship, PairwiseLoopOracle) {
  // 2x2 spatial grid, C = 2, hand-set parameters.
  DgcwConfig cfg;
  cfg.channels = 2;
  cfg.zero_init_g2 = false;
  auto p = make_dgcw_params<double>(cfg, 0, "h");
  assign(p.g1.weight, {1.0, -0.5, 0.25, 2.0});
  assign(p.g1.bias, {0.1, -0.2});
  assign(p.g2.weight, {0.5, 1.5, -1.0, 0.75});
  assign(p.g2.bias, {0.05, -0.3});
  auto w = random_tensor({1, 4, 4, 2}, 43, 0, 1);
  auto v = random_tensor({1, 4, 2}, 44);
  auto r = relationship(w, v, p);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      std::vector<double> x{w.at({0, i, j, 0}) * v.at({0, i, 0}), w.at({0, i, j, 1}) * v.at({0, i, 1})};
      const auto expected = apply_g(p, x);
      for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(r.at({0, i, j, c}), expected[c], 1e-12);
    }
}

TEST(Aggregate, ResidualIdentityConstantAndLoopOracle) {
  auto p = random_params(3, NormKind::Dbs, 2, 50);
  auto f = random_tensor({1, 3, 4, 6}, 51);  // P = 2 * 3 = 6 after ratio 2
  auto zero = Tensor<double>::zeros({1, 6, 6, 3});
  EXPECT_TRUE(dgcw::test::bit_equal(aggregate(zero, f, p), f));

  Buffer<double> cr(6 * 6 * 3);
  const double rv[3] = {0.5, -1.0, 0.25};
  for (std::size_t i = 0; i < cr.size(); ++i) cr[i] = rv[i % 3];
  auto out = aggregate(Tensor<double>::from({1, 6, 6, 3}, std::move(cr)), f, p);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 6; ++x) EXPECT_NEAR(out.at({0, c, y, x}) - f.at({0, c, y, x}), 6 * rv[c], 1e-13);

  auto p1 = random_params(2, NormKind::Dbs, 1, 52);
  auto f1 = random_tensor({2, 2, 2, 2}, 53);
  auto r = random_tensor({2, 4, 4, 2}, 54);
  auto a = aggregate(r, f1, p1);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t c = 0; c < 2; ++c) {
        double s = 0;
        for (std::size_t j = 0; j < 4; ++j) s += r.at({n, i, j, c});
        EXPECT_NEAR(a.at({n, c, i / 2, i % 2}), f1.at({n, c, i / 2, i % 2}) + s, 1e-14);
      }
}

TEST(DgcwForward, ZeroG2IsExactIdentity) {
  DgcwConfig cfg;
  cfg.channels = 5;
  cfg.downsample_ratio = 2;
  for (auto impl : {DgcwImpl::Naive, DgcwImpl::Fused})
    for (auto norm : {NormKind::Dbs, NormKind::Softmax, NormKind::Tanh}) {
      cfg.norm = norm;
      auto p = make_dgcw_params<double>(cfg, 60, "z");
      for (auto v : p.g2.weight.data()) ASSERT_EQ(v, 0.0);
      auto f = random_tensor({2, 5, 6, 4}, 61);
      EXPECT_TRUE(dgcw::test::bit_equal(dgcw_forward(f, p, impl), f));
    }
}

TEST(DgcwForward, SinglePixelHandUnrolled) {
  for (auto norm : {NormKind::Dbs, NormKind::Softmax, NormKind::Tanh}) {
    auto p = random_params(3, norm, 2, 70);
    auto f = random_tensor({1, 3, 2, 2}, 71);
    // D = channel means; Q, K, V = affine maps of D.
    double d[3], q[3], k[3], v[3];
    for (std::size_t c = 0; c < 3; ++c)
      d[c] = (f.at({0, c, 0, 0}) + f.at({0, c, 0, 1}) + f.at({0, c, 1, 0}) + f.at({0, c, 1, 1})) / 4;
    for (std::size_t o = 0; o < 3; ++o) {
      q[o] = p.wq.bias.data()[o];
      k[o] = p.wk.bias.data()[o];
      v[o] = p.wv.bias.data()[o];
      for (std::size_t c = 0; c < 3; ++c) {
        q[o] += p.wq.weight.at({o, c}) * d[c];
        k[o] += p.wk.weight.at({o, c}) * d[c];
        v[o] += p.wv.weight.at({o, c}) * d[c];
      }
    }
    double m[3], w[3], msum = 0, esum = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      m[c] = (q[c] - k[c]) * (q[c] - k[c]);
      msum += m[c];
      esum += std::exp(m[c]);
    }
    for (std::size_t c = 0; c < 3; ++c) {
      if (norm == NormKind::Dbs) w[c] = m[c] / (msum + 1e-12);
      if (norm == NormKind::Softmax) w[c] = std::exp(m[c]) / esum;
      if (norm == NormKind::Tanh) w[c] = std::tanh(m[c]);
    }
    const auto r = apply_g(p, {w[0] * v[0], w[1] * v[1], w[2] * v[2]});
    for (auto impl : {DgcwImpl::Naive, DgcwImpl::Fused}) {
      auto out = dgcw_forward(f, p, impl);
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 2; ++y)
          for (std::size_t x = 0; x < 2; ++x) EXPECT_NEAR(out.at({0, c, y, x}), f.at({0, c, y, x}) + r[c], 1e-12);
    }
  }
}

TEST(DgcwForward, FusedPairContextMatchesComposition) {
  auto p = random_params(4, NormKind::Dbs, 1, 80, 3);
  auto q = random_tensor({2, 7, 4}, 81), k = random_tensor({2, 7, 4}, 82), v = random_tensor({2, 7, 4}, 83);
  auto naive = sum_partners(relationship(normalize_weights(channel_distance(q, k), p.norm_kind, p.epsilon), v, p));
  EXPECT_LT(rel_diff(fused_pair_context(q, k, v, p), naive), 1e-13);
}

TEST(DgcwForward, TooSmallExtentThrows) {
  auto p = random_params(2, NormKind::Dbs, 4, 84);
  EXPECT_THROW(dgcw_forward(random_tensor({1, 2, 3, 8}, 85), p, DgcwImpl::Naive), ShapeError);
  EXPECT_THROW(dgcw_forward(random_tensor({1, 2, 3, 8}, 85), p, DgcwImpl::Fused), ShapeError);
}

TEST(DgcwEquivalence, FusedMatchesNaiveOverRandomCases) {
  const NormKind norms[3] = {NormKind::Dbs, NormKind::Softmax, NormKind::Tanh};
  double worst_out = 0, worst_grad = 0;
  for (std::size_t trial = 0; trial < 120; ++trial) {
    KeyedRng rng(trial, "equivalence-case");
    const std::size_t c = 1 + rng.below(16);
    const std::size_t ratio = 1 + rng.below(2);
    const std::size_t h = 1 + rng.below(8), w = 1 + rng.below(64 / h);
    const std::size_t block = 1 + rng.below(20);
    auto p = random_params(c, norms[trial % 3], ratio, 1000 + trial, block);
    auto f = random_tensor({1 + rng.below(2), c, h * ratio, w * ratio}, 2000 + trial);
    f.set_requires_grad(true);
    auto out_w = random_tensor({f.dim(0), c, f.dim(2), f.dim(3)}, 3000 + trial);
    Tensor<double> outs[2];
    std::vector<std::vector<double>> grads[2];
    for (int k = 0; k < 2; ++k) {
      auto tensors = param_tensors(p);
      tensors.push_back(&f);
      for (auto* t : tensors) t->zero_grad();
      outs[k] = dgcw_forward(f, p, k ? DgcwImpl::Fused : DgcwImpl::Naive);
      sum_all(mul(outs[k], out_w)).backward();
      for (auto* t : tensors) grads[k].emplace_back(t->grad().begin(), t->grad().end());
    }
    worst_out = std::max(worst_out, rel_diff(outs[1], outs[0]));
    for (std::size_t a = 0; a < grads[0].size(); ++a)
      worst_grad = std::max(worst_grad, rel_diff<double>(grads[1][a], grads[0][a]));
  }
  EXPECT_LT(worst_out, 1e-12);
  EXPECT_LT(worst_grad, 1e-12);
}

TEST(DgcwEquivalence, SinglePrecisionWithinTolerance) {
  DgcwConfig cfg;
  cfg.channels = 8;
  cfg.zero_init_g2 = false;
  cfg.downsample_ratio = 1;
  auto p = make_dgcw_params<float>(cfg, 5, "f");
  auto f = cast<float>(random_tensor({1, 8, 12, 12}, 90));
  auto naive = dgcw_forward(f, p, DgcwImpl::Naive);
  auto fused = dgcw_forward(f, p, DgcwImpl::Fused);
  EXPECT_LT(rel_diff(fused, naive), 1e-6);
}

TEST(DgcwGradcheck, NaiveAllNormsSmallShapes) {
  for (auto norm : {NormKind::Dbs, NormKind::Softmax, NormKind::Tanh}) {
    auto p = random_params(3, norm, 2, 100);
    auto f = random_tensor({1, 3, 6, 6}, 101);  // P = 9
    auto w = random_tensor({1, 3, 6, 6}, 102);
    std::function<Tensor<double>(const Tensor<double>&)> on_f = [p, w](const Tensor<double>& x) {
      return sum_all(mul(dgcw_forward(x, p, DgcwImpl::Naive), w));
    };
    EXPECT_LT(gradcheck<double>(on_f, f, 1e-4), 1e-5) << norm_kind_name(norm);
    std::function<Tensor<double>(const Tensor<double>&)> on_wq = [p, f, w](const Tensor<double>& x) {
      auto q = p;
      q.wq.weight = x;
      return sum_all(mul(dgcw_forward(f, q, DgcwImpl::Naive), w));
    };
    EXPECT_LT(gradcheck<double>(on_wq, p.wq.weight, 1e-4), 1e-5) << norm_kind_name(norm);
    std::function<Tensor<double>(const Tensor<double>&)> on_g1 = [p, f, w](const Tensor<double>& x) {
      auto q = p;
      q.g1.weight = x;
      return sum_all(mul(dgcw_forward(f, q, DgcwImpl::Naive), w));
    };
    EXPECT_LT(gradcheck<double>(on_g1, p.g1.weight, 1e-4), 1e-5) << norm_kind_name(norm);
  }
}

TEST(DgcwGradcheck, FusedInputGradient) {
  auto p = random_params(4, NormKind::Dbs, 1, 110, 2);
  auto f = random_tensor({1, 4, 2, 3}, 111);
  auto w = random_tensor({1, 4, 2, 3}, 112);
  std::function<Tensor<double>(const Tensor<double>&)> fn = [p, w](const Tensor<double>& x) {
    return sum_all(mul(dgcw_forward(x, p, DgcwImpl::Fused), w));
  };
  EXPECT_LT(gradcheck<double>(fn, f, 1e-4), 1e-5);
}

TEST(Downsample, AvgPoolAndExtents) {
  EXPECT_EQ(downsampled_extent(12, 9, 4), (std::pair<std::size_t, std::size_t>{3, 2}));
  EXPECT_EQ(downsampled_extent(3, 3, 4), (std::pair<std::size_t, std::size_t>{1, 1}));
  auto f = Tensor<double>::from({1, 1, 2, 4}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  auto d = downsample(f, 2, DownsampleKind::AvgPool);
  EXPECT_EQ(d.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_EQ(d.data()[0], 3.5);
  EXPECT_EQ(d.data()[1], 5.5);
  EXPECT_TRUE(dgcw::test::bit_equal(downsample(f, 1, DownsampleKind::AvgPool), f));
}
