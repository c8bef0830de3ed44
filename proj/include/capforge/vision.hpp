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

#ifndef CAPFORGE_VISION_HPP_
#define CAPFORGE_VISION_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "capforge/checkpoint.hpp"
#include "capforge/ops.hpp"
#include "capforge/tensor.hpp"

namespace capforge::vision {

enum class VocabularySource { kCocoStyle, kWebStyle };

std::string_view source_name(VocabularySource source);
VocabularySource parse_source(std::string_view name);

class TagVocabulary {
 public:
  TagVocabulary() = default;
  // Tags are lowercased; duplicates are an error.
  TagVocabulary(std::vector<std::string> tags, VocabularySource source);

  // Colors and shapes.
  static TagVocabulary coco_style();
  // Shapes plus the entity-context words.
  static TagVocabulary web_style();

  std::size_t size() const { return tags_.size(); }
  const std::string& at(std::size_t i) const { return tags_.at(i); }
  const std::vector<std::string>& tags() const { return tags_; }
  VocabularySource source() const { return source_; }
  std::optional<std::size_t> index_of(std::string_view tag) const;

  // One tag per line.
  void save(const std::string& path) const;
  static TagVocabulary load(const std::string& path, VocabularySource source);

  bool operator==(const TagVocabulary&) const = default;

 private:
  std::vector<std::string> tags_;
  VocabularySource source_ = VocabularySource::kCocoStyle;
};

struct ResidualUnit {
  ops::ConvParams conv1;
  ops::BatchNormParams bn1;
  ops::ConvParams conv2;
  ops::BatchNormParams bn2;
  std::optional<ops::ConvParams> projection;  // 1x1 strided conv, no BN

  std::size_t in_channels() const { return conv1.in_channels(); }
  std::size_t out_channels() const { return conv2.out_channels(); }
  std::size_t stride() const { return conv1.stride; }
};

// relu(h(x) + bn2(conv2(relu(bn1(conv1(x)))))) with running BN statistics.
Tensor residual_unit_forward(const Tensor& x, const ResidualUnit& unit);

struct UnitSpec {
  std::size_t channels;
  std::size_t stride;
};

struct NetworkConfig {
  std::size_t stem_channels = 16;
  std::size_t stem_kernel = 3;
  std::size_t stem_stride = 2;
  std::size_t stem_padding = 1;
  std::vector<UnitSpec> units = {{16, 1}, {32, 2}, {64, 2}, {64, 1}};
  std::size_t image_size = 32;  // canonical training size
  std::uint64_t seed = 1;
};

struct VisionNet {
  NetworkConfig config;
  ops::ConvParams stem;
  ops::BatchNormParams stem_bn;
  std::vector<ResidualUnit> units;
  Tensor head_weights;  // C_final x V
  Tensor head_bias;     // V
  TagVocabulary vocabulary;

  std::size_t feature_channels() const { return head_weights.dim(0); }
  // Every parameter updated by training, in a fixed order.
  std::vector<Tensor*> parameters();
};

// He-normal conv weights, gamma = 1, beta = 0, zero biases, small head.
// Throws InvalidArgument naming the first unit whose output would be empty
// at the canonical image size.
VisionNet build_network(const NetworkConfig& config, TagVocabulary vocabulary);

// Smallest square side for which every stage keeps spatial extent >= 1.
std::size_t minimum_input_size(const NetworkConfig& config);

// Convolutional stack in inference mode. Input N x 3 x H x W.
Tensor feature_map(const VisionNet& net, const Tensor& images);
// Globally pooled features, N x C.
Tensor pooled_features(const VisionNet& net, const Tensor& images);

struct ConceptDetections {
  std::vector<std::string> tags;
  std::vector<double> scores;  // each in (0, 1), independent per tag

  std::optional<double> score(std::string_view tag) const;
  std::vector<std::string> above(double threshold) const;
};

// Accepts 3 x H x W or 1 x 3 x H x W of any size at least the minimum.
ConceptDetections detect_concepts(const VisionNet& net, const Tensor& image);
// Scores for a batch; N x V sigmoid outputs.
Tensor detect_batch(const VisionNet& net, const Tensor& images);
// Center-crop to a square and bilinearly resize to the canonical size, then
// classify. Coincides with detect_concepts at the canonical size.
ConceptDetections classify_resized(const VisionNet& net, const Tensor& image);
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

// Union of vocabularies (a's order, then b's new tags); max on overlap.
ConceptDetections dual_detector(const ConceptDetections& a,
                                const ConceptDetections& b);

struct TrainConfig {
  std::size_t epochs = 24;
  std::size_t batch_size = 32;
  // Small datasets are cycled so that every epoch takes at least this many
  // optimizer steps.
  std::size_t min_steps_per_epoch = 16;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 7;
};

struct TrainingReport {
  std::vector<double> epoch_loss;  // mean batch BCE per epoch
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

// Minimizes mean per-tag BCE with momentum SGD and a cosine learning-rate
// schedule. Images are 3 x H x W at the canonical size.
TrainingReport train_multilabel(VisionNet& net, std::span<const Tensor> images,
                                std::span<const std::vector<std::string>> tags,
                                const TrainConfig& config,
                                const EpochCallback& on_epoch = {});

// Targets N x V from tag lists; throws InvalidArgument naming unknown tags.
Tensor encode_targets(const TagVocabulary& vocab,
                      std::span<const std::vector<std::string>> tags);

// Area under the ROC curve via the rank-sum statistic, ties averaged.
double auc(std::span<const double> scores, std::span<const int> labels);

struct AucReport {
  std::vector<std::string> tags;
  std::vector<double> per_tag;
  double mean = 0;
};
// Tags lacking positives or negatives in the evaluation set are skipped.
AucReport evaluate_auc(const VisionNet& net, std::span<const Tensor> images,
                       std::span<const std::vector<std::string>> tags);

Checkpoint to_checkpoint(const VisionNet& net);
VisionNet from_checkpoint(const Checkpoint& checkpoint);
void save_network(const std::string& path, const VisionNet& net);
VisionNet load_network(const std::string& path);

}  // namespace capforge::vision

#endif  // CAPFORGE_VISION_HPP_
