// Copyright 2026 The MixRep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mixrep/errors.h"
#include "mixrep/ops.h"
#include "mixrep/tensor.h"
#include "test_util.h"

namespace mixrep {
namespace {

using testing::check_gradients;
using testing::probe;
using testing::random_tensor;
using T64 = Tensor<double>;

TEST(Tensor, ShapeAndNumelAgree) {
  const auto t = T64::zeros({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_THROW(T64::from({2, 2}, {1, 2, 3}), DimensionError);
}

TEST(Tensor, BackwardOfSumGivesOnes) {
  auto x = T64::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  sum(x).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Tensor, BackwardOfSquareGivesTwiceInput) {
  auto x = T64::from({3}, {1.5, -2, 0.25}, true);
  sum(mul(x, x)).backward();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2 * x.data()[i]);
}

TEST(Tensor, RepeatedBackwardAccumulatesExactlyTwice) {
  RngStream rng(3);
  auto x = random_tensor({4, 5}, rng);
  auto w = random_tensor({5, 2}, rng);
  const auto loss = sum(mul(matmul(x, w), matmul(x, w)));
  loss.backward();
  const std::vector<double> once(x.grad().begin(), x.grad().end());
  loss.backward();
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(x.grad()[i], 2 * once[i]);
}

TEST(Tensor, NonScalarBackwardIsUsageError) {
  auto x = T64::from({2}, {1, 2}, true);
  EXPECT_THROW(scale(x, 2.0).backward(), UsageError);
}

TEST(Tensor, EveryReachableLeafGetsGradient) {
  RngStream rng(4);
  auto a = random_tensor({3, 3}, rng);
  auto b = random_tensor({3}, rng);
  auto unused = random_tensor({2}, rng);
  sum(add(a, b)).backward();
  EXPECT_TRUE(a.has_grad());
  EXPECT_TRUE(b.has_grad());
  EXPECT_FALSE(unused.has_grad());
}

TEST(Tensor, NoGradGuardSkipsGraph) {
  auto x = T64::from({2}, {1, 2}, true);
  T64 y;
  {
    NoGradGuard guard;
    y = scale(x, 3.0);
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(NoGradGuard::grad_enabled());
}

TEST(Matmul, IdentityAndProjector) {
  const auto eye = T64::from({2, 2}, {1, 0, 0, 1});
  const auto m = T64::from({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(matmul(eye, m).values(), m.values());
  const auto p = T64::from({2, 2}, {1, 0, 0, 0});
  const auto r = T64::from({2, 2}, {5, 6, 7, 8});
  EXPECT_EQ(matmul(p, r).values(), (std::vector<double>{5, 6, 0, 0}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(T64::zeros({2, 3}), T64::zeros({4, 2}));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x2]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  RngStream rng(5);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({4, 5}, rng);
  check_gradients([&] { return sum(matmul(a, b)); }, {a, b});
  check_gradients([&] { return probe(matmul(a, b)); }, {a, b});
}

TEST(BatchedMatmul, GradientMatchesFiniteDifferences) {
  RngStream rng(6);
  auto a = random_tensor({3, 2, 4}, rng);
  auto b = random_tensor({3, 4, 5}, rng);
  auto bt = random_tensor({3, 5, 4}, rng);
  check_gradients([&] { return probe(batched_matmul(a, b)); }, {a, b});
  check_gradients([&] { return probe(batched_matmul(a, bt, true)); }, {a, bt});
}

TEST(Elementwise, Examples) {
  const auto a = T64::from({2}, {1, 2});
  const auto b = T64::from({2}, {3, 4});
  EXPECT_EQ(add(a, b).values(), (std::vector<double>{4, 6}));
  EXPECT_EQ(scale(T64::from({2}, {2, 4}), 0.5).values(), (std::vector<double>{1, 2}));
  EXPECT_EQ(sub(b, a).values(), (std::vector<double>{2, 2}));
  EXPECT_EQ(mul(a, b).values(), (std::vector<double>{3, 8}));
}

TEST(Elementwise, BroadcastRule) {
  const auto a = T64::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto row = T64::from({3}, {10, 20, 30});
  EXPECT_EQ(add(a, row).values(), (std::vector<double>{11, 22, 33, 14, 25, 36}));
  const auto col = T64::from({2, 1}, {100, 200});
  EXPECT_EQ(add(a, col).values(), (std::vector<double>{101, 102, 103, 204, 205, 206}));
  EXPECT_THROW(add(a, T64::zeros({2})), DimensionError);
  EXPECT_THROW(add(a, T64::zeros({3, 3})), DimensionError);
}

TEST(Elementwise, GradientsIncludingBroadcastReduction) {
  RngStream rng(7);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({2, 3, 4}, rng);
  auto row = random_tensor({4}, rng);
  auto mid = random_tensor({3, 1}, rng);
  for (auto kind : {Elementwise::kAdd, Elementwise::kSub, Elementwise::kMul}) {
    check_gradients([&] { return probe(elementwise(kind, a, b)); }, {a, b});
    check_gradients([&] { return probe(elementwise(kind, a, row)); }, {a, row});
    check_gradients([&] { return probe(elementwise(kind, a, mid)); }, {a, mid});
  }
  check_gradients([&] { return probe(scale(a, 0.3)); }, {a});
}

TEST(LogSoftmax, UniformAndStable) {
  const auto u = log_softmax(T64::from({4}, {0, 0, 0, 0}));
  for (double v : u.values()) EXPECT_NEAR(v, std::log(0.25), 1e-12);
  const auto s = log_softmax(T64::from({2}, {1000, 0}));
  EXPECT_NEAR(s.values()[0], 0.0, 1e-12);
  EXPECT_NEAR(s.values()[1], -1000.0, 1e-9);
  EXPECT_THROW(log_softmax(T64::from({2}, {NAN, 0})), NumericError);
  EXPECT_THROW(log_softmax(T64::from({2}, {INFINITY, 0})), NumericError);
}

TEST(LogSoftmax, SlicesNormalize) {
  RngStream rng(8);
  const auto y = log_softmax(random_tensor({5, 7}, rng, false, 10.0));
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 7; ++j) s += std::exp(y.values()[r * 7 + j]);
    EXPECT_NEAR(std::log(s), 0.0, 1e-6);
  }
}

TEST(LogSoftmax, GradientMatchesFiniteDifferences) {
  RngStream rng(9);
  auto x = random_tensor({3, 5}, rng);
  check_gradients([&] { return probe(log_softmax(x)); }, {x});
}

TEST(AttentionSoftmax, MasksKeysAndFuture) {
  const auto s = T64::zeros({1, 3, 4});
  const std::vector<std::size_t> lens{3};
  const auto p = attention_softmax(s, std::span<const std::size_t>(lens), true);
  const auto& v = p.values();
  EXPECT_DOUBLE_EQ(v[0], 1.0);
  EXPECT_DOUBLE_EQ(v[1], 0.0);
  EXPECT_DOUBLE_EQ(v[4], 0.5);
  EXPECT_DOUBLE_EQ(v[5], 0.5);
  EXPECT_NEAR(v[8] + v[9] + v[10], 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(v[11], 0.0);
}

TEST(AttentionSoftmax, GradientMatchesFiniteDifferences) {
  RngStream rng(10);
  auto s = random_tensor({2, 3, 4}, rng);
  const std::vector<std::size_t> lens{4, 2};
  check_gradients(
      [&] { return probe(attention_softmax(s, std::span<const std::size_t>(lens), false)); },
      {s});
  check_gradients(
      [&] { return probe(attention_softmax(s, std::span<const std::size_t>(lens), true)); }, {s});
}

TEST(LayerNorm, Examples) {
  const auto g = T64::full({2}, 1.0), b = T64::zeros({2});
  const auto c = layer_norm(T64::from({2}, {5, 5}), g, b);
  EXPECT_EQ(c.values(), (std::vector<double>{0, 0}));
  const auto y = layer_norm(T64::from({2}, {1, 3}), g, b);
  EXPECT_NEAR(y.values()[0], -1.0, 1e-9);
  EXPECT_NEAR(y.values()[1], 1.0, 1e-9);
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  RngStream rng(11);
  auto x = random_tensor({3, 6}, rng);
  auto g = random_tensor({6}, rng);
  auto b = random_tensor({6}, rng);
  check_gradients([&] { return probe(layer_norm(x, g, b, 1e-5)); }, {x, g, b});
}

TEST(Conv2d, SumOfTopLeftWindow) {
  std::vector<double> v(16);
  std::iota(v.begin(), v.end(), 1.0);
  const auto x = T64::from({1, 4, 4, 1}, v);
  const auto k = T64::full({1, 3, 3, 1}, 1.0);
  const auto y = conv2d(x, k, 2, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y.item(), 1 + 2 + 3 + 5 + 6 + 7 + 9 + 10 + 11);
}

TEST(Conv2d, OutputExtentAndErrors) {
  const auto y = conv2d(T64::zeros({2, 16, 9, 3}), T64::zeros({4, 3, 3, 3}), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{2, 8, 5, 4}));
  EXPECT_THROW(conv2d(T64::zeros({1, 2, 2, 1}), T64::zeros({1, 3, 3, 1}), 1, 0), DimensionError);
  EXPECT_THROW(conv2d(T64::zeros({1, 4, 4, 2}), T64::zeros({1, 3, 3, 1}), 1, 0), DimensionError);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  RngStream rng(12);
  auto x = random_tensor({2, 7, 6, 2}, rng);
  auto k = random_tensor({3, 3, 3, 2}, rng);
  check_gradients([&] { return probe(conv2d(x, k, 2, 0)); }, {x, k});
  check_gradients([&] { return probe(conv2d(x, k, 1, 1)); }, {x, k});
}

TEST(DepthwiseConv, DeltaKernelIsIdentity) {
  RngStream rng(13);
  const auto x = random_tensor({2, 5, 3}, rng, false);
  const auto k = T64::from({3, 3}, {0, 1, 0, 0, 1, 0, 0, 1, 0});
  EXPECT_EQ(depthwise_conv1d(x, k, 1).values(), x.values());
  EXPECT_THROW(depthwise_conv1d(x, T64::zeros({2, 3}), 1), DimensionError);
}

TEST(DepthwiseConv, GradientMatchesFiniteDifferences) {
  RngStream rng(14);
  auto x = random_tensor({2, 6, 3}, rng);
  auto k = random_tensor({3, 5}, rng);
  check_gradients([&] { return probe(depthwise_conv1d(x, k, 2)); }, {x, k});
}

TEST(Activation, Examples) {
  const auto r = relu(T64::from({2}, {-3, 3}));
  EXPECT_EQ(r.values(), (std::vector<double>{0, 3}));
  EXPECT_EQ(swish(T64::from({1}, {0})).item(), 0.0);
  const double s = activation(Activation::kSigmoid, T64::from({1}, {0})).item();
  EXPECT_DOUBLE_EQ(s, 0.5);
}

TEST(Activation, GradientsMatchFiniteDifferences) {
  RngStream rng(15);
  auto x = random_tensor({4, 5}, rng);
  check_gradients([&] { return probe(swish(x)); }, {x});
  check_gradients([&] { return probe(activation(Activation::kSigmoid, x)); }, {x});
  check_gradients([&] { return probe(relu(x)); }, {x});
  auto g = random_tensor({3, 6}, rng);
  check_gradients([&] { return probe(glu(g)); }, {g});
}

TEST(Dropout, IdentityCasesAndErrors) {
  RngStream rng(16);
  const auto x = random_tensor({10}, rng, false);
  EXPECT_EQ(dropout(x, 0.0, true, rng).values(), x.values());
  EXPECT_EQ(dropout(x, 0.1, false, rng).values(), x.values());
  EXPECT_THROW(dropout(x, 1.0, true, rng), ParameterError);
  EXPECT_THROW(dropout(x, -0.1, true, rng), ParameterError);
}

TEST(Dropout, ZeroedFractionAndMean) {
  RngStream rng(17);
  const std::size_t n = 1000000;
  const auto x = T64::full({n}, 1.0);
  const auto y = dropout(x, 0.1, true, rng);
  std::size_t zeros = 0;
  double total = 0;
  for (double v : y.values()) {
    zeros += v == 0.0;
    total += v;
  }
  EXPECT_NEAR(double(zeros) / double(n), 0.1, 0.002);
  EXPECT_NEAR(total / double(n), 1.0, 0.01);
}

TEST(Dropout, GradientUsesSameMask) {
  RngStream seed(18);
  auto x = random_tensor({4, 6}, seed);
  check_gradients(
      [&] {
        RngStream rng(5);
        return probe(dropout(x, 0.3, true, rng));
      },
      {x});
}

TEST(Dropout, DeterministicGivenStream) {
  RngStream a(19), b(19);
  const auto x = T64::full({100}, 1.0);
  EXPECT_EQ(dropout(x, 0.5, true, a).values(), dropout(x, 0.5, true, b).values());
}

TEST(ShapeOps, GradientsMatchFiniteDifferences) {
  RngStream rng(20);
  auto x = random_tensor({2, 3, 4, 5}, rng);
  check_gradients([&] { return probe(swap_middle_axes(x)); }, {x});
  check_gradients([&] { return probe(reshape(x, {6, 20})); }, {x});
  check_gradients([&] { return mean(mul(x, x)); }, {x});
  const std::vector<std::size_t> idx{1, 1, 0};
  check_gradients([&] { return probe(index_select_rows(x, std::span<const std::size_t>(idx))); },
                  {x});
  const std::vector<std::size_t> lens{2, 3};
  check_gradients([&] { return probe(mask_padding(x, std::span<const std::size_t>(lens))); },
                  {x});
  auto table = random_tensor({5, 3}, rng);
  const std::vector<int> ids{4, 0, 4, 2};
  check_gradients([&] { return probe(embedding(table, std::span<const int>(ids), {2, 2})); },
                  {table});
}

TEST(ShapeOps, SwapMiddleAxesMovesEntries) {
  std::vector<double> v(24);
  std::iota(v.begin(), v.end(), 0.0);
  const auto y = swap_middle_axes(T64::from({1, 2, 3, 4}, v));
  EXPECT_EQ(y.shape(), (Shape{1, 3, 2, 4}));
  EXPECT_EQ(y.at({0, 2, 1, 3}), 23.0);
  EXPECT_EQ(y.at({0, 1, 0, 2}), 6.0);
  EXPECT_THROW(reshape(y, {5, 5}), DimensionError);
}

TEST(ShapeOps, MaskPaddingZeroesTail) {
  const auto x = T64::full({2, 3, 2}, 1.0);
  const std::vector<std::size_t> lens{1, 3};
  const auto y = mask_padding(x, std::span<const std::size_t>(lens));
  EXPECT_EQ(y.values(), (std::vector<double>{1, 1, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1}));
}

TEST(ShapeOps, EmbeddingRejectsOutOfRangeIds) {
  const std::vector<int> ids{7};
  EXPECT_THROW(embedding(T64::zeros({5, 3}), std::span<const int>(ids), {1}), DimensionError);
}

}  // namespace
}  // namespace mixrep
