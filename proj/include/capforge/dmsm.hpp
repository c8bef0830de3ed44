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

#ifndef CAPFORGE_DMSM_HPP_
#define CAPFORGE_DMSM_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "capforge/caption_lm.hpp"
#include "capforge/checkpoint.hpp"
#include "capforge/tensor.hpp"

namespace capforge::dmsm {

// Letter trigrams of one word with '#' boundary markers: "cat" -> #ca cat at#.
std::vector<std::string> letter_trigrams(std::string_view word);

class TrigramInventory {
 public:
  TrigramInventory() = default;
  explicit TrigramInventory(std::vector<std::string> trigrams);  // sorted, deduplicated
  static TrigramInventory build(std::span<const std::string> captions);

  const std::vector<std::string>& trigrams() const { return trigrams_; }
  std::size_t size() const { return trigrams_.size(); }

  // Count vector over the inventory; unknown trigrams are dropped.
  std::vector<double> featurize(std::span<const std::string> words) const;

 private:
  std::vector<std::string> trigrams_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Modality { kImage, kCaption };

struct Embedding {
  std::vector<double> values;  // unit norm
  Modality modality = Modality::kImage;
};

struct Layer {
  Tensor weights;  // in x out
  Tensor bias;     // out
};

// affine -> tanh, repeated; the caller normalizes.
struct Tower {
  std::vector<Layer> layers;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  Tensor forward(const Tensor& input) const;  // N x in -> N x out
};

struct DmsmConfig {
  std::size_t dim = 1000;
  std::size_t hidden = 128;
  std::size_t negatives = 4;  // R
  double gamma = 10.0;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 3;
};

struct DmsmModel {
  DmsmConfig config;
  TrigramInventory inventory;
  // Image inputs are standardized with these before the tower.
  Tensor input_mean;
  Tensor input_scale;
  Tower image_tower;
  Tower caption_tower;

  std::size_t dim() const { return image_tower.output_dim(); }
  std::size_t image_input_dim() const { return image_tower.input_dim(); }
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
};

// Random towers over the given inventory, identity input standardization.
DmsmModel init_model(std::size_t image_dim, TrigramInventory inventory, const DmsmConfig& config);

// L2-normalizes a tower output; throws on the zero vector.
Embedding normalize_embedding(std::span<const double> raw, Modality modality);

Embedding embed_image(const DmsmModel& model, std::span<const double> vision_features);
Embedding embed_caption(const DmsmModel& model, std::span<const std::string> words);
Embedding embed_caption(const DmsmModel& model, std::string_view caption);

double dmsm_score(const Embedding& image, const Embedding& caption);

struct DmsmPair {
  std::vector<double> vision_features;
  std::string caption;
};

// Rows of `image_features` are anchors; anchor i scores candidate caption
// positive[i] against candidates negatives[i].
struct RankingBatch {
  Tensor image_features;  // N x F, raw (standardized inside)
  std::vector<std::string> captions;
  std::vector<std::size_t> positive;
  std::vector<std::vector<std::size_t>> negatives;
};

// Mean -log softmax(gamma * cos). With `grads`, also returns gradients aligned
// with model.parameters().
double ranking_loss(const DmsmModel& model, const RankingBatch& batch, double gamma,
                    std::vector<Tensor>* grads = nullptr);

struct TrainingReport {
  double initial_loss = 0;
  std::vector<double> epoch_loss;  // after each epoch, on fixed evaluation batches
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

DmsmModel train_dmsm(std::span<const DmsmPair> pairs, const DmsmConfig& config,
                     TrainingReport* report = nullptr, const EpochCallback& on_epoch = {});

// Fraction of pairs whose own caption outscores `distractors` other captions
// drawn from the set (seeded, distinct text). Ties count as misses.
double retrieval_accuracy(const DmsmModel& model, std::span<const DmsmPair> pairs,
                          std::size_t distractors, std::uint64_t seed);

struct RankedCandidate {
  lm::CaptionCandidate candidate;
  double dmsm_score = 0;
  Embedding image;
  Embedding caption;
};

// Stable sort by dmsm_score, descending.
std::vector<RankedCandidate> rank_candidates(const DmsmModel& model,
                                             std::span<const double> vision_features,
                                             std::span<const lm::CaptionCandidate> candidates);

Checkpoint to_checkpoint(const DmsmModel& model);
DmsmModel from_checkpoint(const Checkpoint& checkpoint);
void save_model(const std::string& path, const DmsmModel& model);
DmsmModel load_model(const std::string& path);

}  // namespace capforge::dmsm

#endif  // CAPFORGE_DMSM_HPP_
