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

#ifndef CAPFORGE_TRAINING_HPP_
#define CAPFORGE_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "capforge/caption_lm.hpp"
#include "capforge/confidence.hpp"
#include "capforge/dmsm.hpp"
#include "capforge/pipeline.hpp"
#include "capforge/synthetic.hpp"
#include "capforge/vision.hpp"

// Desk-scale training of every pipeline model on the synthetic corpus. Each
// step reads its inputs from and writes its checkpoint to the paths named
// by a PipelineConfig, so steps can run as separate processes.
namespace capforge::pipeline {

struct TrainingPlan {
  std::uint64_t seed = 7;
  std::size_t train_size = 2000;
  // Confidence examples come from a disjoint stretch of the stream.
  std::size_t confidence_offset = 10000;
  std::size_t confidence_size = 600;

  vision::TrainConfig vision;
  lm::LmConfig language_model;
  dmsm::DmsmConfig dmsm;
  confidence::ConfidenceConfig confidence;

  std::function<void(std::string_view)> log;
};

// Tags of `example` known to `vocab`.
std::vector<std::string> vocabulary_tags(const vision::TagVocabulary& vocab,
                                         std::span<const std::string> tags);

std::vector<lm::CaptionExample> lm_corpus(std::span<const synth::LabeledExample> corpus);
std::vector<dmsm::DmsmPair> dmsm_pairs(const vision::VisionNet& coco, const vision::VisionNet& web,
                                       std::span<const synth::LabeledExample> corpus);

// Per image: the ground-truth caption (excellent); the pipeline's own top
// candidate (good when its tag words equal the ground truth, bad otherwise);
// a one-word corruption (bad); a two-word corruption (embarrassing).
std::vector<confidence::LabeledFeatures> confidence_examples(
    const Models& models, const PipelineConfig& config,
    std::span<const synth::LabeledExample> corpus);

void train_vision_step(const TrainingPlan& plan, const PipelineConfig& config);
void train_lm_step(const TrainingPlan& plan, const PipelineConfig& config);
void train_dmsm_step(const TrainingPlan& plan, const PipelineConfig& config);
// Also writes the synthetic entity gallery when the configured file is absent.
void train_confidence_step(const TrainingPlan& plan, const PipelineConfig& config);

// All four steps in order.
void train_all(const TrainingPlan& plan, const PipelineConfig& config);

}  // namespace capforge::pipeline

#endif  // CAPFORGE_TRAINING_HPP_
