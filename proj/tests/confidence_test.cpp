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

#include "capforge/confidence.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "capforge/errors.hpp"
#include "capforge/ops.hpp"
#include "oracles.hpp"

namespace capforge::confidence {
namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
  std::normal_distribution<double> d(0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Two noisy clusters; label quality drawn from the cluster.
std::vector<LabeledFeatures> clusters(std::mt19937_64& rng, std::size_t n, std::size_t dim,
                                      double separation) {
  std::vector<LabeledFeatures> out;
  std::uniform_int_distribution<int> pick(0, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const bool good = i % 2 == 0;
    auto f = random_vec(rng, dim);
    f[0] += good ? separation : -separation;
    const QualityLabel label = good
                                   ? (pick(rng) ? QualityLabel::kExcellent : QualityLabel::kGood)
                                   : (pick(rng) ? QualityLabel::kBad : QualityLabel::kEmbarrassing);
    out.push_back({f, label});
  }
  return out;
}

// --- labels ---------------------------------------------------------------------

TEST(Labels, BinarizationIsTotal) {
  EXPECT_EQ(binarize(QualityLabel::kExcellent), 1);
  EXPECT_EQ(binarize(QualityLabel::kGood), 1);
  EXPECT_EQ(binarize(QualityLabel::kBad), 0);
  EXPECT_EQ(binarize(QualityLabel::kEmbarrassing), 0);
  for (const char* n : {"excellent", "good", "bad", "embarrassing"}) {
    EXPECT_EQ(label_name(parse_label(n)), n);
  }
  EXPECT_THROW(parse_label("fine"), InvalidArgument);
}

// --- features -------------------------------------------------------------------

TEST(Features, DimensionIsTwoDPlusFive) {
  const std::vector<double> v(1000, 0.03), c(1000, -0.03);
  const std::vector<std::string> caption = {"a", "red", "circle"};
  const auto f = assemble_features(v, c, -6.0, caption, 2, 0.4);
  EXPECT_EQ(f.dim(), 2005u);
  EXPECT_EQ(f.flatten().size(), 2005u);
  for (std::size_t d : {1, 7, 32}) {
    const std::vector<double> a(d, 1.0);
    EXPECT_EQ(assemble_features(a, a, -1, caption, 0, 0).flatten().size(), 2 * d + 5);
  }
}

TEST(Features, ScalarFields) {
  const std::vector<double> v = {1, 0}, c = {0, 1};
  const std::vector<std::string> caption = {"a", "red", "circle"};
  const auto f = assemble_features(v, c, -6.0, caption, 0, 0.25);
  EXPECT_EQ(f.lm_score_per_word, -2.0);
  EXPECT_EQ(f.log_tag_coverage, 0.0);
  EXPECT_EQ(f.caption_length, 3.0);
  EXPECT_DOUBLE_EQ(assemble_features(v, c, -6.0, caption, 3, 0).log_tag_coverage, std::log(4.0));
  EXPECT_EQ(f.flatten(), (std::vector<double>{1, 0, 0, 1, -6, 3, -2, 0, 0.25}));
  EXPECT_THROW(assemble_features(v, c, -1, {}, 0, 0), InvalidArgument);
}

// --- scoring --------------------------------------------------------------------

TEST(Score, ZeroModelIsOneHalf) {
  const auto m = ConfidenceModel::zeros(9);
  std::mt19937_64 rng(1);
  EXPECT_EQ(confidence_score(m, random_vec(rng, 9)), 0.5);
  EXPECT_THROW(confidence_score(m, random_vec(rng, 8)), ShapeError);
}

TEST(Score, MatchesTensorOpsRecomputation) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    ConfidenceModel m = ConfidenceModel::zeros(7);
    m.weights = random_vec(rng, 7);
    m.mean = random_vec(rng, 7);
    for (auto& s : m.scale) s = 0.5 + std::abs(random_vec(rng, 1)[0]);
    m.bias = random_vec(rng, 1)[0];
    const auto x = random_vec(rng, 7, 2.0);
    Tensor z({1, 7}), w({7, 1}), b({1});
    for (std::size_t i = 0; i < 7; ++i) {
      z[i] = (x[i] - m.mean[i]) / m.scale[i];
      w[i] = m.weights[i];
    }
    b[0] = m.bias;
    const double expected = ops::sigmoid(ops::affine(z, w, b))[0];
    EXPECT_NEAR(confidence_score(m, x), expected, 1e-12);
    EXPECT_EQ(confidence_score(m, x), confidence_score(m, x));
  }
}

// --- training -------------------------------------------------------------------

TEST(Train, RejectsSingleClass) {
  std::vector<LabeledFeatures> ex = {{{1, 2}, QualityLabel::kGood},
                                     {{2, 1}, QualityLabel::kExcellent}};
  EXPECT_THROW(train_confidence(ex, {}), InvalidArgument);
  EXPECT_THROW(train_confidence({}, {}), InvalidArgument);
}

TEST(Train, SeparableToyIsPerfect) {
  const std::vector<LabeledFeatures> ex = {{{2.0, -1.0, 0.5}, QualityLabel::kExcellent},
                                           {{-1.0, 3.0, 0.5}, QualityLabel::kEmbarrassing}};
  TrainingReport r;
  const auto m = train_confidence(ex, {}, &r);
  EXPECT_TRUE(r.converged);
  EXPECT_GT(confidence_score(m, ex[0].features), 0.5);
  EXPECT_LT(confidence_score(m, ex[1].features), 0.5);
}

TEST(Train, ClusterAccuracy) {
  std::mt19937_64 rng(3);
  const auto ex = clusters(rng, 400, 20, 2.0);
  const auto m = train_confidence(ex, {});
  std::size_t right = 0;
  for (const auto& e : ex) right += (confidence_score(m, e.features) > 0.5) == binarize(e.label);
  EXPECT_GE(right, 360u);
}

TEST(Train, GradientAtOptimumIsSmallAndMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ex = clusters(rng, 60, 6, 1.0);
    ConfidenceConfig cfg;
    cfg.l2 = 1e-2;
    TrainingReport r;
    const auto m = train_confidence(ex, cfg, &r);
    EXPECT_TRUE(r.converged) << "trial " << trial;
    EXPECT_LE(r.gradient_norm, 1e-6);

    LogisticProblem p;
    p.l2 = cfg.l2;
    for (const auto& e : ex) {
      p.rows.push_back(m.standardize(e.features));
      p.targets.push_back(binarize(e.label));
    }
    std::vector<double> theta = m.weights;
    theta.push_back(m.bias);
    std::vector<double> grad;
    EXPECT_NEAR(p.loss(theta, &grad), r.final_loss, 1e-12);
    double gn = 0;
    for (double g : grad) gn += g * g;
    EXPECT_LE(std::sqrt(gn), 1e-6);

    // Away from the optimum the analytic gradient must agree with central
    // differences.
    for (auto& t : theta) t += random_vec(rng, 1, 0.5)[0];
    p.loss(theta, &grad);
    Tensor t0({theta.size()});
    for (std::size_t i = 0; i < theta.size(); ++i) t0[i] = theta[i];
    const auto numeric = oracle::numeric_gradient(
        [&](const Tensor& t) { return p.loss(t.values()); }, t0);
    EXPECT_LE(oracle::relative_error(grad, numeric), 1e-4);
  }
}

TEST(Train, StandardizationRoundTrip) {
  std::mt19937_64 rng(5);
  auto ex = clusters(rng, 100, 5, 1.0);
  for (auto& e : ex) {
    e.features[3] = 7.0;  // constant
    e.features[4] *= 1000.0;
  }
  const auto m = train_confidence(ex, {});
  EXPECT_EQ(m.scale[3], 1.0);
  for (std::size_t j = 0; j < 5; ++j) {
    if (j == 3) continue;
    double mean = 0, var = 0;
    for (const auto& e : ex) mean += m.standardize(e.features)[j];
    mean /= 100.0;
    for (const auto& e : ex) {
      const double z = m.standardize(e.features)[j] - mean;
      var += z * z;
    }
    var /= 100.0;
    EXPECT_LE(std::abs(mean), 1e-9) << j;
    EXPECT_NEAR(var, 1.0, 1e-6) << j;
  }
}

TEST(Train, HeavyRegularizationGivesBaseRate) {
  std::mt19937_64 rng(6);
  auto ex = clusters(rng, 100, 4, 2.0);
  for (std::size_t i = 0; i < 30; ++i) ex[2 * i + 1].label = QualityLabel::kGood;  // 80 positive
  ConfidenceConfig cfg;
  cfg.l2 = 1e9;
  const auto m = train_confidence(ex, cfg);
  for (double w : m.weights) EXPECT_LT(std::abs(w), 1e-8);
  for (const auto& e : ex) EXPECT_NEAR(confidence_score(m, e.features), 0.8, 1e-6);
}

TEST(Train, MonotoneInPositiveWeightFeature) {
  std::mt19937_64 rng(7);
  const auto ex = clusters(rng, 200, 6, 1.5);
  const auto m = train_confidence(ex, {});
  ASSERT_GT(m.weights[0], 0);
  auto x = ex[0].features;
  double prev = confidence_score(m, x);
  for (int i = 0; i < 20; ++i) {
    x[0] += 0.25;
    const double s = confidence_score(m, x);
    EXPECT_GT(s, prev);
    prev = s;
  }
}

// --- persistence ----------------------------------------------------------------

TEST(File, RoundTrip) {
  std::mt19937_64 rng(8);
  const auto ex = clusters(rng, 50, 9, 1.0);
  const auto m = train_confidence(ex, {});
  std::stringstream buf;
  m.save(buf);
  const auto back = ConfidenceModel::load(buf);
  EXPECT_EQ(back.weights, m.weights);
  EXPECT_EQ(back.mean, m.mean);
  EXPECT_EQ(back.scale, m.scale);
  EXPECT_EQ(back.bias, m.bias);
  std::stringstream junk("CFLM....");
  EXPECT_THROW(ConfidenceModel::load(junk), FormatError);
}

}  // namespace
}  // namespace capforge::confidence
