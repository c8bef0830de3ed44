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

#ifndef CAPFORGE_PIPELINE_HPP_
#define CAPFORGE_PIPELINE_HPP_

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "capforge/caption_lm.hpp"
#include "capforge/confidence.hpp"
#include "capforge/dmsm.hpp"
#include "capforge/entity.hpp"
#include "capforge/tensor.hpp"
#include "capforge/vision.hpp"

namespace capforge::pipeline {

// Execution order of a caption call.
inline constexpr std::array<std::string_view, 5> kStages = {"vision", "language_model", "dmsm",
                                                            "entity", "confidence"};

inline constexpr std::string_view kConfigEnv = "CAPTION_FORGE_CONFIG";
inline constexpr std::string_view kDefaultConfigFile = "caption_forge.json";

struct PipelineConfig {
  std::string vision_coco = "models/vision_coco.ck";
  std::string vision_web = "models/vision_web.ck";
  std::string language_model = "models/caption_lm.cflm";
  std::string dmsm = "models/dmsm.ck";
  std::string confidence = "models/confidence.cfcm";
  std::string gallery = "models/gallery.json";

  double tag_threshold = 0.5;
  std::size_t beam_width = 8;
  std::size_t candidate_count = 8;
  std::size_t max_caption_length = 20;
  double entity_threshold = 0.8;
  double confidence_fallback_threshold = 0.3;
  std::size_t dmsm_dim = 1000;

  double latency_budget_ms = 50;
  std::size_t max_body_bytes = std::size_t{8} << 20;

  // Throws InvalidArgument on thresholds outside [0, 1] or zero sizes.
  void validate() const;
};

// Unknown keys are rejected. Relative checkpoint paths are resolved against
// `base_dir` when it is non-empty.
PipelineConfig parse_config(std::string_view json, const std::string& base_dir = "");
// Relative paths inside the file are taken relative to the file's directory.
PipelineConfig load_config(const std::string& path);
std::string config_to_json(const PipelineConfig& config);
// Writes paths relative to the file's directory where possible.
void save_config(const std::string& path, const PipelineConfig& config);
// $CAPTION_FORGE_CONFIG if set and non-empty, otherwise caption_forge.json.
std::string default_config_path();

struct Models {
  vision::VisionNet coco;
  vision::VisionNet web;
  lm::LanguageModel language_model;
  dmsm::DmsmModel dmsm;
  confidence::ConfidenceModel confidence;
  entity::EntityGallery gallery;
  // Checkpoint role -> content digest.
  std::map<std::string, std::string> identifiers;
};

// Loads and cross-checks every checkpoint named by the config.
Models load_models(const PipelineConfig& config);

// Pooled features of both detectors, concatenated (DMSM image input).
std::vector<double> joint_features(const vision::VisionNet& coco, const vision::VisionNet& web,
                                   const Tensor& image);
std::vector<std::vector<double>> joint_features(const vision::VisionNet& coco,
                                                const vision::VisionNet& web,
                                                std::span<const Tensor> images);

// Confidence inputs for a reranked candidate whose caption became
// `final_words` after enrichment.
confidence::ConfidenceFeatures candidate_features(const dmsm::RankedCandidate& ranked,
                                                  std::span<const std::string> final_words);

struct TagScore {
  std::string tag;
  double score = 0;
  bool operator==(const TagScore&) const = default;
};

struct CaptionResult {
  std::string caption;
  double confidence = 0;
  std::vector<TagScore> tags;                  // above threshold, detector order
  std::vector<entity::EntityMatch> entities;   // matched only
  std::size_t candidates_considered = 0;
  std::map<std::string, double> stage_latencies;  // milliseconds
  bool low_confidence_fallback_used = false;
};

std::string to_json(const CaptionResult& result, bool include_latencies = true);
CaptionResult result_from_json(std::string_view json);
// Equality on everything except stage_latencies.
bool same_outcome(const CaptionResult& a, const CaptionResult& b);

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);
  Pipeline(PipelineConfig config, Models models);

  // Read-only; safe to call from several threads at once. Image is 3 x H x W
  // (or 1 x 3 x H x W). Failures surface as StageError.
  CaptionResult caption(const Tensor& image) const;

  // Outputs of the stages before confidence scoring.
  struct Trace {
    Tensor image;                  // 3 x H x W
    std::vector<double> features;  // joint pooled features
    lm::TagSet tags;
    std::vector<TagScore> tag_scores;
    std::size_t candidates_considered = 0;
    dmsm::RankedCandidate best;
    std::vector<entity::EntityMatch> entities;  // matched only
    std::vector<std::string> words;             // enriched caption
  };
  Trace trace(const Tensor& image, std::map<std::string, double>* latencies = nullptr) const;

  const PipelineConfig& config() const { return config_; }
  const Models& models() const { return models_; }

 private:
  PipelineConfig config_;
  Models models_;
};

// Loads the models named by `config` and captions one image.
CaptionResult caption_image(const PipelineConfig& config, const Tensor& image);

}  // namespace capforge::pipeline

#endif  // CAPFORGE_PIPELINE_HPP_
