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

#ifndef CAPFORGE_CONFIDENCE_HPP_
#define CAPFORGE_CONFIDENCE_HPP_

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace capforge::confidence {

enum class QualityLabel { kExcellent, kGood, kBad, kEmbarrassing };

std::string_view label_name(QualityLabel label);
QualityLabel parse_label(std::string_view name);
// excellent, good -> 1; bad, embarrassing -> 0.
int binarize(QualityLabel label);

struct ConfidenceFeatures {
  std::vector<double> dmsm_vision_vec;
  std::vector<double> dmsm_caption_vec;
  double lm_score = 0;
  double caption_length = 0;
  double lm_score_per_word = 0;
  double log_tag_coverage = 0;
  double dmsm_score = 0;

  std::size_t dim() const { return dmsm_vision_vec.size() + dmsm_caption_vec.size() + 5; }
  // Vision vector, caption vector, then the five scalars in field order.
  std::vector<double> flatten() const;
};

ConfidenceFeatures assemble_features(std::span<const double> vision_vec,
                                     std::span<const double> caption_vec, double lm_score,
                                     std::span<const std::string> caption,
                                     std::size_t covered_tags, double dmsm_score);

struct ConfidenceModel {
  std::vector<double> weights;
  double bias = 0;
  std::vector<double> mean;
  std::vector<double> scale;  // standard deviation; 1 for constant features

  static ConfidenceModel zeros(std::size_t dim);
  std::size_t dim() const { return weights.size(); }
  std::vector<double> standardize(std::span<const double> features) const;

  void save(std::ostream& out) const;
  static ConfidenceModel load(std::istream& in);
  void save(const std::string& path) const;
  static ConfidenceModel load(const std::string& path);
};

double confidence_score(const ConfidenceModel& model, std::span<const double> features);
double confidence_score(const ConfidenceModel& model, const ConfidenceFeatures& features);

// Mean logistic loss over standardized rows plus l2/2 |w|^2 (bias unpenalized).
// Parameters are the weights followed by the bias.
struct LogisticProblem {
  std::vector<std::vector<double>> rows;
  std::vector<int> targets;  // 0 or 1
  double l2 = 0;

  std::size_t dim() const { return rows.empty() ? 0 : rows.front().size(); }
  double loss(std::span<const double> params, std::vector<double>* grad = nullptr) const;
};

struct ConfidenceConfig {
  double l2 = 1e-3;
  std::size_t max_iterations = 20000;
  double gradient_tolerance = 1e-6;
};

struct TrainingReport {
  double final_loss = 0;
  double gradient_norm = 0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct LabeledFeatures {
  std::vector<double> features;
  QualityLabel label = QualityLabel::kGood;
};

ConfidenceModel train_confidence(std::span<const LabeledFeatures> examples,
                                 const ConfidenceConfig& config,
                                 TrainingReport* report = nullptr);

}  // namespace capforge::confidence

#endif  // CAPFORGE_CONFIDENCE_HPP_
