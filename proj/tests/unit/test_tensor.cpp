#include <gtest/gtest.h>

#include <cmath>
#include <thread>

#include "dgcw/gradcheck.hpp"
#include "dgcw/ops.hpp"
#include "dgcw/parallel.hpp"
#include "test_util.hpp"

using namespace dgcw;
using dgcw::test::max_abs_diff;
using dgcw::test::random_tensor;

namespace {

using Fn = std::function<Tensor<double>(const Tensor<double>&)>;

// Scalarizes with fixed random weights so every output element matters.
Fn weighted_sum(std::function<Tensor<double>(const Tensor<double>&)> op, Shape out_shape, std::uint64_t seed = 99) {
  auto w = random_tensor(out_shape, seed);
  return [op, w](const Tensor<double>& x) { return sum_all(mul(op(x), w)); };
}

}  // namespace

TEST(Tensor, ShapeAndElementCount) {
  auto t = Tensor<double>::zeros({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_THROW(Tensor<double>::from({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Tensor, MutableDataRejectedOnNonLeaf) {
  auto a = random_tensor({3}, 1, -1, 1, true);
  auto b = add(a, a);
  EXPECT_THROW(b.mutable_data(), std::logic_error);
}

TEST(Elementwise, SelfSubtractionIsZero) {
  auto a = Tensor<double>::from({2}, std::vector<double>{1, 2});
  auto d = sub(a, a);
  EXPECT_EQ(d.data()[0], 0.0);
  EXPECT_EQ(d.data()[1], 0.0);
}

TEST(Elementwise, Square) {
  auto a = Tensor<double>::from({2}, std::vector<double>{-2, 3});
  auto s = square(a);
  EXPECT_EQ(s.data()[0], 4.0);
  EXPECT_EQ(s.data()[1], 9.0);
}

TEST(Elementwise, DivisionByZeroIsAnError) {
  auto a = Tensor<double>::from({2}, std::vector<double>{1, 0});
  auto b = Tensor<double>::from({2}, std::vector<double>{0, 2});
  EXPECT_THROW(div(a, b), std::domain_error);
  // The DBS-style guard avoids the error path.
  auto guarded = div(a, add(b, 1e-12));
  EXPECT_DOUBLE_EQ(guarded.data()[0], 1e12);
  EXPECT_EQ(guarded.data()[1], 0.0);
}

TEST(Elementwise, BroadcastMatchesLoopOracle) {
  auto a = random_tensor({2, 3, 4}, 1);
  auto b = random_tensor({3, 1}, 2);
  auto c = mul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 3, 4}));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(c.at({i, j, k}), a.at({i, j, k}) * b.at({j, 0}));
}

TEST(Elementwise, BroadcastBothSides) {
  auto a = random_tensor({2, 1, 3}, 3);
  auto b = random_tensor({4, 1}, 4);
  auto c = sub(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 4, 3}));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(c.at({i, j, k}), a.at({i, 0, k}) - b.at({j, 0}));
}

TEST(Elementwise, ConflictingExtentsThrow) {
  EXPECT_THROW(add(random_tensor({2, 3}, 1), random_tensor({4, 3}, 2)), ShapeError);
}

TEST(Elementwise, UnaryValues) {
  auto a = Tensor<double>::from({3}, std::vector<double>{-1.5, 0.0, 2.0});
  auto r = relu(a);
  EXPECT_EQ(r.data()[0], 0.0);
  EXPECT_EQ(r.data()[2], 2.0);
  auto t = tanh(a);
  EXPECT_DOUBLE_EQ(t.data()[0], std::tanh(-1.5));
  auto e = exp(a);
  EXPECT_DOUBLE_EQ(e.data()[2], std::exp(2.0));
  auto s = sigmoid(a);
  EXPECT_DOUBLE_EQ(s.data()[1], 0.5);
}

TEST(Matmul, IdentityLeavesMatrix) {
  auto eye = Tensor<double>::from({3, 3}, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto m = random_tensor({3, 4}, 5);
  EXPECT_TRUE(dgcw::test::bit_equal(matmul(eye, m), m));
}

TEST(Matmul, HandCase) {
  auto a = Tensor<double>::from({2, 2}, std::vector<double>{1, 2, 3, 4});
  auto b = Tensor<double>::from({2, 1}, std::vector<double>{1, 1});
  auto c = matmul(a, b);
  EXPECT_EQ(c.data()[0], 3.0);
  EXPECT_EQ(c.data()[1], 7.0);
}

TEST(Matmul, TripleLoopOracle) {
  auto a = random_tensor({4, 5}, 6);
  auto b = random_tensor({5, 3}, 7);
  auto c = matmul(a, b);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 5; ++k) s += a.at({i, k}) * b.at({k, j});
      EXPECT_NEAR(c.at({i, j}), s, 1e-12);
    }
}

TEST(Matmul, BatchedTripleLoopOracle) {
  auto a = random_tensor({2, 3, 4}, 8);
  auto b = random_tensor({2, 4, 5}, 9);
  auto c = matmul(a, b);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < 4; ++k) s += a.at({n, i, k}) * b.at({n, k, j});
        EXPECT_NEAR(c.at({n, i, j}), s, 1e-12);
      }
}

TEST(Matmul, InnerMismatchThrows) {
  EXPECT_THROW(matmul(random_tensor({2, 3}, 1), random_tensor({4, 2}, 2)), ShapeError);
}

TEST(Reduce, SumAxis) {
  auto a = Tensor<double>::from({2, 2}, std::vector<double>{1, 2, 3, 4});
  auto s = reduce(ReduceKind::Sum, a, 1);
  ASSERT_EQ(s.shape(), (Shape{2}));
  EXPECT_EQ(s.data()[0], 3.0);
  EXPECT_EQ(s.data()[1], 7.0);
}

TEST(Reduce, VarianceCases) {
  auto c = Tensor<double>::full({1, 5}, 3.25);
  EXPECT_EQ(reduce(ReduceKind::Variance, c, 1).item(), 0.0);
  auto v = Tensor<double>::from({2}, std::vector<double>{0, 2});
  EXPECT_DOUBLE_EQ(reduce(ReduceKind::Variance, v, 0).item(), 1.0);
}

TEST(Reduce, MatchesLoopOracle) {
  auto a = random_tensor({3, 4, 5}, 10);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    auto s = reduce(ReduceKind::Sum, a, axis, true);
    auto m = reduce(ReduceKind::Mean, a, axis, true);
    auto mx = reduce(ReduceKind::Max, a, axis, true);
    auto var = reduce(ReduceKind::Variance, a, axis, true);
    const std::size_t ext = a.dim(axis);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < 5; ++k) {
          std::size_t idx[3] = {i, j, k};
          if (idx[axis] != 0) continue;
          double sum = 0, sq = 0, best = -1e300;
          for (std::size_t t = 0; t < ext; ++t) {
            idx[axis] = t;
            const double x = a.at({idx[0], idx[1], idx[2]});
            sum += x;
            best = std::max(best, x);
          }
          const double mean = sum / ext;
          for (std::size_t t = 0; t < ext; ++t) {
            idx[axis] = t;
            const double x = a.at({idx[0], idx[1], idx[2]});
            sq += (x - mean) * (x - mean);
          }
          idx[axis] = 0;
          EXPECT_NEAR(s.at({idx[0], idx[1], idx[2]}), sum, 1e-12);
          EXPECT_NEAR(m.at({idx[0], idx[1], idx[2]}), mean, 1e-12);
          EXPECT_EQ(mx.at({idx[0], idx[1], idx[2]}), best);
          EXPECT_NEAR(var.at({idx[0], idx[1], idx[2]}), sq / ext, 1e-12);
        }
  }
}

TEST(Reduce, AxisOutOfRangeThrows) { EXPECT_THROW(reduce(ReduceKind::Sum, random_tensor({2, 2}, 1), 2), ShapeError); }

TEST(Softmax, Cases) {
  auto z = softmax(Tensor<double>::from({2}, std::vector<double>{0, 0}), 0);
  EXPECT_EQ(z.data()[0], 0.5);
  EXPECT_EQ(z.data()[1], 0.5);
  auto big = softmax(Tensor<double>::from({2}, std::vector<double>{1000, 0}), 0);
  EXPECT_TRUE(std::isfinite(big.data()[0]) && std::isfinite(big.data()[1]));
  EXPECT_NEAR(big.data()[0], 1.0, 1e-15);
  auto s = softmax(Tensor<double>::from({3}, std::vector<double>{1, 2, 3}), 0);
  const double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(s.data()[i], std::exp(i + 1.0) / denom, 1e-12);
}

TEST(Softmax, SlicesSumToOne) {
  auto s = softmax(random_tensor({3, 4, 5}, 11, -5, 5), 1);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 5; ++k) {
      double sum = 0;
      for (std::size_t j = 0; j < 4; ++j) sum += s.at({i, j, k});
      EXPECT_NEAR(sum, 1.0, 1e-14);
    }
}

TEST(Backward, LinearCase) {
  auto x = random_tensor({4}, 12, -1, 1, true);
  sum_all(x).backward();
  for (auto g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareCase) {
  auto x = Tensor<double>::from({2}, std::vector<double>{1, -2}, true);
  sum_all(square(x)).backward();
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], -4.0);
}

TEST(Backward, TwoConsumersSumTheirGradients) {
  auto x = random_tensor({3}, 13, -1, 1, true);
  auto y = add(mul(x, 2.0), square(x));
  sum_all(y).backward();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 + 2.0 * x.data()[i]);
}

TEST(Backward, NonScalarLossThrows) {
  auto x = random_tensor({3}, 14, -1, 1, true);
  EXPECT_THROW(mul(x, 2.0).backward(), ShapeError);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  auto x = random_tensor({3}, 15, -1, 1, true);
  Tensor<double> y;
  {
    NoGradGuard g;
    y = mul(x, 2.0);
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.is_leaf());
}

TEST(Gradcheck, SumIsExact) {
  Fn f = [](const Tensor<double>& x) { return sum_all(x); };
  EXPECT_LT(gradcheck<double>(f, random_tensor({5, 3}, 16), 1e-4), 1e-10);
}

TEST(Gradcheck, ElementwiseOps) {
  const Shape s{3, 4};
  auto other = random_tensor({4}, 17, 0.5, 1.5);
  std::vector<std::pair<const char*, Fn>> cases = {
      {"add", weighted_sum([other](const Tensor<double>& x) { return add(x, other); }, s)},
      {"sub", weighted_sum([other](const Tensor<double>& x) { return sub(other, x); }, s)},
      {"mul", weighted_sum([other](const Tensor<double>& x) { return mul(x, other); }, s)},
      {"div_num", weighted_sum([other](const Tensor<double>& x) { return div(x, other); }, s)},
      {"square", weighted_sum([](const Tensor<double>& x) { return square(x); }, s)},
      {"tanh", weighted_sum([](const Tensor<double>& x) { return tanh(x); }, s)},
      {"exp", weighted_sum([](const Tensor<double>& x) { return exp(x); }, s)},
      {"sigmoid", weighted_sum([](const Tensor<double>& x) { return sigmoid(x); }, s)},
      {"relu", weighted_sum([](const Tensor<double>& x) { return relu(x); }, s)},
      {"neg", weighted_sum([](const Tensor<double>& x) { return neg(x); }, s)},
  };
  for (auto& [name, f] : cases) EXPECT_LT(gradcheck<double>(f, random_tensor(s, 18), 1e-6), 1e-6) << name;
  Fn divden = weighted_sum([other](const Tensor<double>& x) { return div(other, x); }, s);
  Fn logf = weighted_sum([](const Tensor<double>& x) { return log(x); }, s);
  EXPECT_LT(gradcheck<double>(divden, random_tensor(s, 19, 0.5, 2), 1e-6), 1e-6);
  EXPECT_LT(gradcheck<double>(logf, random_tensor(s, 20, 0.5, 2), 1e-6), 1e-6);
}

TEST(Gradcheck, BroadcastOperandReceivesReducedGradient) {
  auto a = random_tensor({2, 3, 4}, 21);
  Fn f = weighted_sum([a](const Tensor<double>& b) { return mul(a, b); }, {2, 3, 4});
  EXPECT_LT(gradcheck<double>(f, random_tensor({3, 1}, 22), 1e-6), 1e-6);
}

TEST(Gradcheck, StructuralOps) {
  auto b = random_tensor({2, 5, 3}, 23);
  std::vector<std::pair<const char*, Fn>> cases = {
      {"matmul_lhs", weighted_sum([b](const Tensor<double>& x) { return matmul(x, b); }, {2, 4, 3})},
      {"matmul_rhs",
       weighted_sum([](const Tensor<double>& x) { return matmul(transpose(x, 1, 2), x); }, {2, 5, 5})},
      {"permute", weighted_sum([](const Tensor<double>& x) { return permute(x, {2, 0, 1}); }, {5, 2, 4})},
      {"reshape", weighted_sum([](const Tensor<double>& x) { return reshape(x, {8, 5}); }, {8, 5})},
      {"sum", weighted_sum([](const Tensor<double>& x) { return reduce(ReduceKind::Sum, x, 1); }, {2, 5})},
      {"mean", weighted_sum([](const Tensor<double>& x) { return reduce(ReduceKind::Mean, x, 2); }, {2, 4})},
      {"max", weighted_sum([](const Tensor<double>& x) { return reduce(ReduceKind::Max, x, 0); }, {4, 5})},
      {"var", weighted_sum([](const Tensor<double>& x) { return reduce(ReduceKind::Variance, x, 1); }, {2, 5})},
      {"softmax", weighted_sum([](const Tensor<double>& x) { return softmax(x, 2); }, {2, 4, 5})},
      {"flip", weighted_sum([](const Tensor<double>& x) { return flip(x, 2); }, {2, 4, 5})},
      {"concat", weighted_sum([](const Tensor<double>& x) { return concat<double>({x, square(x)}, 1); }, {2, 8, 5})},
  };
  for (auto& [name, f] : cases) EXPECT_LT(gradcheck<double>(f, random_tensor({2, 4, 5}, 24), 1e-6), 1e-6) << name;
}

TEST(Ops, ConcatAndFlipValues) {
  auto a = Tensor<double>::from({1, 2}, std::vector<double>{1, 2});
  auto b = Tensor<double>::from({1, 1}, std::vector<double>{3});
  auto c = concat<double>({a, b}, 1);
  EXPECT_EQ(c.shape(), (Shape{1, 3}));
  EXPECT_EQ(c.data()[2], 3.0);
  auto f = flip(c, 1);
  EXPECT_EQ(f.data()[0], 3.0);
  EXPECT_EQ(f.data()[2], 1.0);
}

TEST(Determinism, ResultsIndependentOfWorkerCount) {
  auto a = random_tensor({64, 48}, 25);
  auto b = random_tensor({48, 40}, 26);
  const std::size_t before = worker_count();
  set_worker_count(1);
  auto c1 = matmul(a, b);
  set_worker_count(4);
  auto c4 = matmul(a, b);
  set_worker_count(before);
  EXPECT_TRUE(dgcw::test::bit_equal(c1, c4));
}
