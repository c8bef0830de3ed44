// Copyright 2026 The Caption Forge Authors.
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
#include <limits>
#include <random>
#include <sstream>

#include "capforge/errors.hpp"
#include "capforge/graph.hpp"
#include "capforge/ops.hpp"
#include "capforge/optim.hpp"
#include "capforge/tensor.hpp"
#include "oracles.hpp"

namespace capforge {
namespace {

using ops::BatchNormParams;
using ops::ConvParams;
using ops::Mode;

ConvParams random_conv(std::mt19937_64& rng, std::size_t oc, std::size_t ic,
                       std::size_t k, std::size_t stride, std::size_t pad) {
  return ConvParams{oracle::random_tensor({oc, ic, k, k}, rng),
                    oracle::random_tensor({oc}, rng), stride, pad};
}

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<Scalar>(5)), ShapeError);
  EXPECT_THROW(Tensor(Shape{}), ShapeError);
  EXPECT_THROW(Tensor({1, 1, 1, 1, 1}), ShapeError);
}

TEST(Tensor, SerializationRoundTripsAndUsesDocumentedLayout) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Shape shape;
    const std::size_t rank = 1 + rng() % 4;
    for (std::size_t i = 0; i < rank; ++i) shape.push_back(1 + rng() % 4);
    const Tensor t = oracle::random_tensor(shape, rng);
    std::stringstream ss;
    write_tensor(ss, t);
    EXPECT_EQ(read_tensor(ss), t);
  }
  std::stringstream ss;
  write_tensor(ss, Tensor({2}, std::vector<Scalar>{1.0, -2.0}));
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 4u + 2 + 1 + 4 + 16);
  EXPECT_EQ(bytes.substr(0, 4), "CFTN");
  EXPECT_EQ(bytes[4], 1);  // version, little-endian u16
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 1);  // rank
  EXPECT_EQ(bytes[7], 2);  // extent
  // 1.0 == 0x3FF0000000000000 little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[17]), 0xF0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[18]), 0x3F);
}

TEST(Tensor, ReadRejectsBadMagic) {
  std::stringstream ss("XXXX0000");
  EXPECT_THROW(read_tensor(ss), FormatError);
}

// --- conv2d ----------------------------------------------------------------

TEST(Conv2d, PointwiseScaling) {
  Tensor x({1, 1, 3, 3}, 1.0);
  ConvParams p{Tensor({1, 1, 1, 1}, 2.0), Tensor({1}, 0.0), 1, 0};
  const Tensor y = ops::conv2d(x, p);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  for (Scalar v : y.data()) EXPECT_EQ(v, 2.0);
}

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 rng(1);
  const Tensor x = oracle::random_tensor({2, 1, 5, 4}, rng);
  ConvParams p{Tensor({1, 1, 1, 1}, 1.0), Tensor({1}, 0.0), 1, 0};
  EXPECT_EQ(ops::conv2d(x, p), x);
}

TEST(Conv2d, StridedPaddedMatchesLoopOracle) {
  std::mt19937_64 rng(11);
  const Tensor x = oracle::random_tensor({2, 3, 8, 8}, rng);
  const ConvParams p = random_conv(rng, 4, 3, 3, 2, 1);
  const Tensor y = ops::conv2d(x, p);
  EXPECT_EQ(y.shape(), (Shape{2, 4, 4, 4}));
  EXPECT_LE(oracle::max_abs_diff(y, oracle::conv2d(x, p.weights, p.bias, 2, 1)),
            1e-12);
}

TEST(Conv2d, RandomShapesMatchOracle) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 2, c = 1 + rng() % 3, oc = 1 + rng() % 4;
    const std::size_t k = 1 + rng() % 3, stride = 1 + rng() % 2, pad = rng() % 2;
    const std::size_t h = k + rng() % 6, w = k + rng() % 6;
    const Tensor x = oracle::random_tensor({n, c, h, w}, rng);
    const ConvParams p = random_conv(rng, oc, c, k, stride, pad);
    EXPECT_LE(oracle::max_abs_diff(ops::conv2d(x, p),
                                   oracle::conv2d(x, p.weights, p.bias, stride, pad)),
              1e-10);
  }
}

TEST(Conv2d, ShapeErrorsNameTheDimensions) {
  std::mt19937_64 rng(2);
  const Tensor x = oracle::random_tensor({1, 2, 4, 4}, rng);
  const ConvParams p = random_conv(rng, 1, 3, 3, 1, 1);
  try {
    ops::conv2d(x, p);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("2 channels"), std::string::npos);
  }
  const ConvParams big = random_conv(rng, 1, 2, 7, 1, 0);
  EXPECT_THROW(ops::conv2d(x, big), ShapeError);
}

// --- batch norm -------------------------------------------------------------

TEST(BatchNorm, AlreadyNormalizedInputPassesThrough) {
  // Per channel: values {-1, 1} repeated -> mean 0, variance 1.
  Tensor x({2, 1, 1, 2}, std::vector<Scalar>{-1, 1, 1, -1});
  auto p = BatchNormParams::identity(1);
  const Tensor y = ops::batch_norm(x, p, Mode::kTrain);
  const double shrink = 1.0 / std::sqrt(1.0 + p.epsilon);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(y[i], x[i], 1e-12 + std::abs(x[i]) * (1 - shrink));
  }
}

TEST(BatchNorm, InferModeIsAffineWithUnitStats) {
  std::mt19937_64 rng(5);
  const Tensor x = oracle::random_tensor({3, 2, 2, 2}, rng);
  auto p = BatchNormParams::identity(2);
  p.epsilon = 0;  // exact affine map when running_var == 1
  p.gamma.fill(2);
  p.beta.fill(3);
  const Tensor y = ops::batch_norm(x, p, Mode::kInfer);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], 2 * x[i] + 3);
}

TEST(BatchNorm, TrainModeStatisticsRecomputedIndependently) {
  std::mt19937_64 rng(6);
  const Tensor x = oracle::random_tensor({4, 2, 5, 5}, rng, -3, 5);
  auto p = BatchNormParams::identity(2);
  // Variance of the output is var / (var + eps); keep eps out of the check.
  p.epsilon = 1e-12;
  const Tensor y = ops::batch_norm(x, p, Mode::kTrain);
  for (std::size_t c = 0; c < 2; ++c) {
    long double sum = 0, sq = 0, xs = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t h = 0; h < 5; ++h)
        for (std::size_t w = 0; w < 5; ++w) {
          sum += y.at(n, c, h, w);
          xs += x.at(n, c, h, w);
        }
    const long double mean = sum / 100;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t h = 0; h < 5; ++h)
        for (std::size_t w = 0; w < 5; ++w)
          sq += (y.at(n, c, h, w) - mean) * (y.at(n, c, h, w) - mean);
    EXPECT_LE(std::abs(static_cast<double>(mean)), 1e-10);
    EXPECT_NEAR(static_cast<double>(sq / 100), 1.0, 1e-6);
    // running mean moved toward the batch mean by the momentum factor
    EXPECT_NEAR(p.running_mean[c], 0.1 * static_cast<double>(xs / 100), 1e-12);
  }
}

TEST(BatchNorm, EmptyBatchInTrainModeIsRejected) {
  auto p = BatchNormParams::identity(1);
  EXPECT_THROW(ops::batch_norm(Tensor(), p, Mode::kTrain), InvalidArgument);
}

TEST(BatchNorm, ChannelMismatchIsRejected) {
  auto p = BatchNormParams::identity(3);
  EXPECT_THROW(ops::batch_norm(Tensor({1, 2, 2, 2}), p, Mode::kInfer), ShapeError);
}

TEST(BatchNorm, RunningStatUpdateIsDeterministic) {
  std::mt19937_64 rng(8);
  const Tensor x = oracle::random_tensor({3, 2, 3, 3}, rng);
  auto a = BatchNormParams::identity(2);
  auto b = BatchNormParams::identity(2);
  EXPECT_EQ(ops::batch_norm(x, a, Mode::kTrain), ops::batch_norm(x, b, Mode::kTrain));
  EXPECT_EQ(a.running_mean, b.running_mean);
  EXPECT_EQ(a.running_var, b.running_var);
}

// --- elementwise ------------------------------------------------------------

TEST(Relu, SignCasesAndIdempotence) {
  const Tensor y = ops::relu(Tensor::vector({-1, 0, 2}));
  EXPECT_EQ(y, Tensor::vector({0, 0, 2}));
  EXPECT_EQ(ops::relu(Tensor({4}, -3.0)), Tensor({4}, 0.0));
  std::mt19937_64 rng(9);
  const Tensor x = oracle::random_tensor({3, 7}, rng);
  EXPECT_EQ(ops::relu(ops::relu(x)), ops::relu(x));
}

TEST(Sigmoid, ValuesSymmetryAndStability) {
  EXPECT_EQ(ops::sigmoid(Scalar(0)), 0.5);
  std::mt19937_64 rng(10);
  const Tensor x = oracle::random_tensor({50}, rng, -20, 20);
  Tensor neg = x;
  for (auto& v : neg.data()) v = -v;
  const Tensor a = ops::sigmoid(x), b = ops::sigmoid(neg);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(a[i] + b[i], 1.0, 1e-15);
  for (double v : {-50.0, 50.0}) {
    const double s = ops::sigmoid(Scalar(v));
    const long double ref = 1.0L / (1.0L + std::exp(-static_cast<long double>(v)));
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
    EXPECT_TRUE(std::isfinite(s));
    EXPECT_LE(std::abs(static_cast<long double>(s) - ref) / ref, 1e-15L);
  }
}

TEST(Sigmoid, NeverNormalizesAcrossElements) {
  std::mt19937_64 rng(13);
  Tensor x = oracle::random_tensor({2, 6}, rng);
  const Tensor before = ops::sigmoid(x);
  x[3] += 5;
  const Tensor after = ops::sigmoid(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i != 3) EXPECT_EQ(before[i], after[i]);
  }
}

// --- pooling ------------------------------------------------------------------

TEST(GlobalAvgPool, ArithmeticMeanOnNonSquarePlane) {
  const Tensor x({1, 1, 2, 3}, std::vector<Scalar>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(ops::global_avg_pool(x), Tensor({1, 1}, 3.5));
  EXPECT_EQ(ops::global_avg_pool(Tensor({1, 2, 3, 5}, 1.25)), Tensor({1, 2}, 1.25));
}

TEST(GlobalAvgPool, RandomShapesMatchSummationOracle) {
  std::mt19937_64 rng(14);
  const Tensor fixed = oracle::random_tensor({2, 4, 5, 7}, rng);
  EXPECT_LE(oracle::max_abs_diff(ops::global_avg_pool(fixed), oracle::mean_pool(fixed)),
            1e-12);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = oracle::random_tensor(
        {1 + rng() % 3, 1 + rng() % 4, 1 + rng() % 9, 1 + rng() % 9}, rng);
    EXPECT_LE(oracle::max_abs_diff(ops::global_avg_pool(x), oracle::mean_pool(x)),
              1e-10);
  }
}

// --- affine -------------------------------------------------------------------

TEST(Affine, IdentityAndOrientation) {
  std::mt19937_64 rng(15);
  const Tensor x = oracle::random_tensor({3, 4}, rng);
  Tensor eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1;
  EXPECT_EQ(ops::affine(x, eye, Tensor({4})), x);

  const Tensor row({1, 2}, std::vector<Scalar>{1, 2});
  // weights are (D x K): column j holds the coefficients of output j
  const Tensor swap({2, 2}, std::vector<Scalar>{0, 1, 1, 0});
  EXPECT_EQ(ops::affine(row, swap, Tensor({2})), Tensor({1, 2}, std::vector<Scalar>{2, 1}));
  const Tensor proj({2, 1}, std::vector<Scalar>{10, 1});
  EXPECT_EQ(ops::affine(row, proj, Tensor({1}, 0.5)), Tensor({1, 1}, 12.5));
}

TEST(Affine, MatchesTripleLoopOracle) {
  std::mt19937_64 rng(16);
  const Tensor x = oracle::random_tensor({3, 5}, rng);
  const Tensor w = oracle::random_tensor({5, 4}, rng);
  const Tensor b = oracle::random_tensor({4}, rng);
  EXPECT_LE(oracle::max_abs_diff(ops::affine(x, w, b), oracle::matmul_bias(x, w, b)),
            1e-12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 6, d = 1 + rng() % 9, k = 1 + rng() % 7;
    const Tensor xi = oracle::random_tensor({n, d}, rng);
    const Tensor wi = oracle::random_tensor({d, k}, rng);
    const Tensor bi = oracle::random_tensor({k}, rng);
    EXPECT_LE(oracle::max_abs_diff(ops::affine(xi, wi, bi),
                                   oracle::matmul_bias(xi, wi, bi)),
              1e-10);
  }
}

TEST(Affine, DimensionMismatchIsRejected) {
  EXPECT_THROW(ops::affine(Tensor({2, 3}), Tensor({4, 2}), Tensor({2})), ShapeError);
  EXPECT_THROW(ops::affine(Tensor({2, 3}), Tensor({3, 2}), Tensor({3})), ShapeError);
}

// --- purity -------------------------------------------------------------------

TEST(Ops, ArePure) {
  std::mt19937_64 rng(17);
  const Tensor x = oracle::random_tensor({2, 3, 6, 5}, rng);
  const ConvParams p = random_conv(rng, 2, 3, 3, 1, 1);
  EXPECT_EQ(ops::conv2d(x, p), ops::conv2d(x, p));
  EXPECT_EQ(ops::global_avg_pool(x), ops::global_avg_pool(x));
  EXPECT_EQ(ops::sigmoid(x), ops::sigmoid(x));
  const Tensor m = ops::global_avg_pool(x);
  const Tensor w = oracle::random_tensor({3, 2}, rng);
  EXPECT_EQ(ops::affine(m, w, Tensor({2})), ops::affine(m, w, Tensor({2})));
}

// --- backward -----------------------------------------------------------------

TEST(Backward, ReluSumSubgradient) {
  Graph g;
  const auto x = g.leaf(Tensor::vector({-1, 2}));
  g.backward(g.sum(g.relu(x)));
  EXPECT_EQ(g.grad(x), Tensor::vector({0, 1}));

  Graph g0;
  const auto z = g0.leaf(Tensor::vector({0}));
  g0.backward(g0.sum(g0.relu(z)));
  EXPECT_EQ(g0.grad(z)[0], 0.0);
}

TEST(Backward, SigmoidSumAtZero) {
  Graph g;
  const auto x = g.leaf(Tensor({3}, 0.0));
  g.backward(g.sum(g.sigmoid(x)));
  for (Scalar v : g.grad(x).data()) EXPECT_EQ(v, 0.25);
}

TEST(Backward, OpaqueNodeOnGradientPathIsRejected) {
  Graph g;
  const auto x = g.leaf(Tensor::vector({1, 2}));
  const auto thresholded = g.opaque("threshold", Tensor::vector({0, 1}), {x});
  EXPECT_THROW(g.backward(g.sum(thresholded)), UnsupportedOp);
}

TEST(Backward, NonScalarLossIsRejected) {
  Graph g;
  const auto x = g.leaf(Tensor::vector({1, 2}));
  EXPECT_THROW(g.backward(g.relu(x)), ShapeError);
}

// Compares graph gradients against central differences for each leaf.
// `build` returns the loss node given the leaves in a fresh graph.
using Builder = std::function<Graph::Node(Graph&, const std::vector<Graph::Node>&)>;

double max_grad_error(const std::vector<Tensor>& inputs, const Builder& build) {
  Graph g;
  std::vector<Graph::Node> leaves;
  for (const auto& t : inputs) leaves.push_back(g.leaf(t));
  g.backward(build(g, leaves));
  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto f = [&](const Tensor& probe) {
      Graph h;
      std::vector<Graph::Node> ls;
      for (std::size_t j = 0; j < inputs.size(); ++j)
        ls.push_back(h.leaf(j == k ? probe : inputs[j]));
      return static_cast<double>(h.value(build(h, ls))[0]);
    };
    const auto numeric = oracle::numeric_gradient(f, inputs[k]);
    worst = std::max(worst, oracle::relative_error(oracle::to_vec(g.grad(leaves[k])),
                                                   numeric));
  }
  return worst;
}

class GradientCheck : public ::testing::Test {
 protected:
  // Losses end in sum(tanh(.)) so the upstream gradient is not uniform.
  std::mt19937_64 rng{2024};
};

TEST_F(GradientCheck, Conv2d) {
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t stride = 1 + trial % 2, pad = trial % 2;
    const Tensor x = oracle::random_tensor({2, 2, 5, 4}, rng);
    const Tensor w = oracle::random_tensor({3, 2, 3, 3}, rng);
    const Tensor b = oracle::random_tensor({3}, rng);
    const double err = max_grad_error({x, w, b}, [&](Graph& g, const auto& l) {
      return g.sum(g.tanh(g.conv2d(l[0], l[1], l[2], stride, pad)));
    });
    EXPECT_LE(err, 1e-4) << "trial " << trial;
  }
}

TEST_F(GradientCheck, BatchNormTrainAndInfer) {
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = oracle::random_tensor({3, 2, 2, 3}, rng, -2, 2);
    const Tensor gamma = oracle::random_tensor({2}, rng, 0.5, 1.5);
    const Tensor beta = oracle::random_tensor({2}, rng);
    for (auto mode : {Mode::kTrain, Mode::kInfer}) {
      auto stats = BatchNormParams::identity(2);
      stats.running_mean = oracle::random_tensor({2}, rng);
      stats.running_var = oracle::random_tensor({2}, rng, 0.5, 2.0);
      const double err = max_grad_error({x, gamma, beta}, [&](Graph& g, const auto& l) {
        auto s = stats;  // keep the running stats fixed across probes
        return g.sum(g.tanh(g.batch_norm(l[0], l[1], l[2], s, mode)));
      });
      EXPECT_LE(err, 1e-4) << "trial " << trial;
    }
  }
}

TEST_F(GradientCheck, ElementwiseAndPooling) {
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = oracle::random_tensor({2, 3, 3, 4}, rng, -2, 2);
    oracle::push_off_zero(x);
    EXPECT_LE(max_grad_error({x}, [](Graph& g, const auto& l) {
                return g.sum(g.sigmoid(g.relu(l[0])));
              }),
              1e-4);
    EXPECT_LE(max_grad_error({x}, [](Graph& g, const auto& l) {
                return g.sum(g.tanh(g.global_avg_pool(g.sigmoid(l[0]))));
              }),
              1e-4);
    const Tensor y = oracle::random_tensor(x.shape(), rng);
    EXPECT_LE(max_grad_error({x, y}, [](Graph& g, const auto& l) {
                return g.sum(g.tanh(g.add(l[0], g.sigmoid(l[1]))));
              }),
              1e-4);
  }
}

TEST_F(GradientCheck, AffineAndNormalize) {
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = oracle::random_tensor({3, 5}, rng);
    const Tensor w = oracle::random_tensor({5, 4}, rng);
    const Tensor b = oracle::random_tensor({4}, rng);
    const Tensor v = oracle::random_tensor({4, 2}, rng);
    EXPECT_LE(max_grad_error({x, w, b, v}, [](Graph& g, const auto& l) {
                const auto zero = g.leaf(Tensor({2}));
                return g.sum(g.affine(g.l2_normalize(g.affine(l[0], l[1], l[2])),
                                      l[3], zero));
              }),
              1e-4);
  }
}

TEST_F(GradientCheck, BinaryCrossEntropy) {
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor z = oracle::random_tensor({4, 3}, rng, -4, 4);
    Tensor t({4, 3});
    for (auto& v : t.data()) v = static_cast<Scalar>(rng() % 2);
    EXPECT_LE(max_grad_error({z}, [&](Graph& g, const auto& l) {
                return g.bce_with_logits(l[0], t);
              }),
              1e-4);
  }
}

TEST_F(GradientCheck, RankingSoftmax) {
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = oracle::random_tensor({3, 4}, rng);
    const Tensor b = oracle::random_tensor({5, 4}, rng);
    std::vector<std::size_t> pos{0, 2, 4};
    std::vector<std::vector<std::size_t>> neg{{1, 3}, {0, 4}, {1, 2}};
    EXPECT_LE(max_grad_error({a, b}, [&](Graph& g, const auto& l) {
                return g.ranking_softmax(g.l2_normalize(l[0]), g.l2_normalize(l[1]),
                                         pos, neg, 3.0);
              }),
              1e-4);
  }
}

TEST(Bce, MatchesDefinition) {
  Graph g;
  const auto z = g.leaf(Tensor::vector({0.0, 2.0}));
  const auto loss = g.bce_with_logits(z, Tensor::vector({1.0, 0.0}));
  const double expected =
      0.5 * (-std::log(0.5) - std::log(1 - 1 / (1 + std::exp(-2.0))));
  EXPECT_NEAR(g.value(loss)[0], expected, 1e-15);
}

// --- sgd ----------------------------------------------------------------------

TEST(Sgd, ZeroLearningRateLeavesParamsUnchanged) {
  std::mt19937_64 rng(18);
  Tensor p = oracle::random_tensor({3, 3}, rng);
  const Tensor before = p;
  sgd_step(p, oracle::random_tensor({3, 3}, rng), 0.0, 0.5);
  EXPECT_EQ(p, before);
}

TEST(Sgd, SingleStep) {
  Tensor p({1}, 1.0);
  sgd_step(p, Tensor({1}, 1.0), 0.1, 0.0);
  EXPECT_DOUBLE_EQ(p[0], 0.9);
  Tensor q({1}, 2.0);
  sgd_step(q, Tensor({1}, 0.0), 0.5, 0.1);
  EXPECT_DOUBLE_EQ(q[0], 2.0 - 0.5 * 0.2);
}

TEST(Sgd, QuadraticBowlConverges) {
  // loss (p - 3)^2, gradient 2 (p - 3): error shrinks by 0.8 per step.
  Tensor p({1}, 0.0);
  for (int i = 0; i < 100; ++i) sgd_step(p, Tensor({1}, 2 * (p[0] - 3)), 0.1, 0.0);
  EXPECT_LE(std::abs(p[0] - 3), 1e-6);
  EXPECT_NEAR(std::abs(p[0] - 3), 3 * std::pow(0.8, 100), 1e-12);
}

TEST(Sgd, ShapeMismatchIsRejected) {
  Tensor p({2});
  EXPECT_THROW(sgd_step(p, Tensor({3}), 0.1, 0), ShapeError);
}

TEST(Sgd, MomentumMatchesHandRecurrence) {
  Tensor p({1}, 1.0);
  MomentumSgd opt(0.1, 0.9, 0.0);
  Tensor* params[] = {&p};
  const Tensor g({1}, 1.0);
  const Tensor* grads[] = {&g};
  opt.step(params, grads);  // v = 1, p = 0.9
  opt.step(params, grads);  // v = 1.9, p = 0.71
  EXPECT_NEAR(p[0], 0.71, 1e-15);
}

TEST(Sgd, MomentumZeroEqualsPlainSgd) {
  std::mt19937_64 rng(19);
  Tensor a = oracle::random_tensor({4}, rng);
  Tensor b = a;
  MomentumSgd opt(0.05, 0.0, 0.01);
  for (int i = 0; i < 5; ++i) {
    const Tensor g = oracle::random_tensor({4}, rng);
    Tensor* params[] = {&a};
    const Tensor* grads[] = {&g};
    opt.step(params, grads);
    sgd_step(b, g, 0.05, 0.01);
  }
  EXPECT_LE(oracle::max_abs_diff(a, b), 1e-15);
}

}  // namespace
}  // namespace capforge
