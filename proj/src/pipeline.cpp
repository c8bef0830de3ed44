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

#include "capforge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "capforge/errors.hpp"
#include "capforge/synthetic.hpp"
#include "capforge/text.hpp"

namespace capforge::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string resolve(const std::string& path, const std::string& base) {
  if (base.empty() || path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).lexically_normal().string();
}

void check_unit(double v, const char* name) {
  if (!(v >= 0 && v <= 1)) {
    throw InvalidArgument(std::string("config: ") + name + " must lie in [0, 1]");
  }
}

Tensor as_batch(const Tensor& image) {
  if (image.rank() == 4 && image.dim(0) == 1) return image;
  if (image.rank() != 3) {
    throw ShapeError("expected a 3 x H x W image, got " + shape_str(image.shape()));
  }
  return image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)});
}

Tensor as_image(const Tensor& image) {
  if (image.rank() == 3) return image;
  const Tensor batch = as_batch(image);
  return batch.reshaped({batch.dim(1), batch.dim(2), batch.dim(3)});
}

class StageClock {
 public:
  StageClock(std::string_view stage, std::map<std::string, double>& sink)
      : stage_(stage), sink_(sink), start_(std::chrono::steady_clock::now()) {}
  ~StageClock() {
    const std::chrono::duration<double, std::milli> elapsed =
        std::chrono::steady_clock::now() - start_;
    sink_[std::string(stage_)] = elapsed.count();
  }
  StageClock(const StageClock&) = delete;
  StageClock& operator=(const StageClock&) = delete;

 private:
  std::string_view stage_;
  std::map<std::string, double>& sink_;
  std::chrono::steady_clock::time_point start_;
};

// Runs `body` as `stage`, timing it and tagging any library error.
template <typename F>
auto run_stage(std::string_view stage, std::map<std::string, double>& latencies, F&& body) {
  StageClock clock(stage, latencies);
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(std::string(stage), e.what());
  }
}

}  // namespace

// --- configuration -----------------------------------------------------------------

void PipelineConfig::validate() const {
  check_unit(tag_threshold, "tag_threshold");
  check_unit(entity_threshold, "entity_threshold");
  check_unit(confidence_fallback_threshold, "confidence_fallback_threshold");
  if (beam_width == 0) throw InvalidArgument("config: beam_width must be at least 1");
  if (candidate_count == 0) throw InvalidArgument("config: candidate_count must be at least 1");
  if (max_caption_length == 0) {
    throw InvalidArgument("config: max_caption_length must be at least 1");
  }
  if (dmsm_dim == 0) throw InvalidArgument("config: dmsm_dim must be at least 1");
  if (!(latency_budget_ms > 0)) throw InvalidArgument("config: latency_budget_ms must be positive");
  if (max_body_bytes == 0) throw InvalidArgument("config: max_body_bytes must be positive");
}

PipelineConfig parse_config(std::string_view text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  if (!doc.is_object()) throw FormatError("config: expected a JSON object");
  PipelineConfig c;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "vision_coco") c.vision_coco = value.get<std::string>();
      else if (key == "vision_web") c.vision_web = value.get<std::string>();
      else if (key == "language_model") c.language_model = value.get<std::string>();
      else if (key == "dmsm") c.dmsm = value.get<std::string>();
      else if (key == "confidence") c.confidence = value.get<std::string>();
      else if (key == "gallery") c.gallery = value.get<std::string>();
      else if (key == "tag_threshold") c.tag_threshold = value.get<double>();
      else if (key == "beam_width") c.beam_width = value.get<std::size_t>();
      else if (key == "candidate_count") c.candidate_count = value.get<std::size_t>();
      else if (key == "max_caption_length") c.max_caption_length = value.get<std::size_t>();
      else if (key == "entity_threshold") c.entity_threshold = value.get<double>();
      else if (key == "confidence_fallback_threshold") {
        c.confidence_fallback_threshold = value.get<double>();
      } else if (key == "dmsm_dim") c.dmsm_dim = value.get<std::size_t>();
      else if (key == "latency_budget_ms") c.latency_budget_ms = value.get<double>();
      else if (key == "max_body_bytes") c.max_body_bytes = value.get<std::size_t>();
      else throw FormatError("config: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  for (auto* p : {&c.vision_coco, &c.vision_web, &c.language_model, &c.dmsm, &c.confidence,
                  &c.gallery}) {
    *p = resolve(*p, base_dir);
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const auto dir = fs::path(path).parent_path();
  return parse_config(buf.str(), dir.empty() ? "." : dir.string());
}

namespace {

json config_doc(const PipelineConfig& c) {
  return {{"vision_coco", c.vision_coco},
          {"vision_web", c.vision_web},
          {"language_model", c.language_model},
          {"dmsm", c.dmsm},
          {"confidence", c.confidence},
          {"gallery", c.gallery},
          {"tag_threshold", c.tag_threshold},
          {"beam_width", c.beam_width},
          {"candidate_count", c.candidate_count},
          {"max_caption_length", c.max_caption_length},
          {"entity_threshold", c.entity_threshold},
          {"confidence_fallback_threshold", c.confidence_fallback_threshold},
          {"dmsm_dim", c.dmsm_dim},
          {"latency_budget_ms", c.latency_budget_ms},
          {"max_body_bytes", c.max_body_bytes}};
}

}  // namespace

std::string config_to_json(const PipelineConfig& config) { return config_doc(config).dump(2); }

void save_config(const std::string& path, const PipelineConfig& config) {
  PipelineConfig rel = config;
  auto dir = fs::path(path).parent_path();
  if (dir.empty()) dir = ".";
  for (auto* p : {&rel.vision_coco, &rel.vision_web, &rel.language_model, &rel.dmsm,
                  &rel.confidence, &rel.gallery}) {
    if (!p->empty()) *p = fs::proximate(*p, dir).string();
  }
  std::ofstream out(path);
  out << config_to_json(rel) << '\n';
  if (!out) throw IoError("cannot write config " + path);
}

std::string default_config_path() {
  const char* env = std::getenv(std::string(kConfigEnv).c_str());
  if (env && *env) return env;
  return std::string(kDefaultConfigFile);
}

// --- models -------------------------------------------------------------------------

Models load_models(const PipelineConfig& config) {
  config.validate();
  Models m;
  m.coco = vision::load_network(config.vision_coco);
  m.web = vision::load_network(config.vision_web);
  m.language_model = lm::LanguageModel::load(config.language_model);
  m.dmsm = dmsm::load_model(config.dmsm);
  m.confidence = confidence::ConfidenceModel::load(config.confidence);
  m.gallery = entity::build_gallery(config.gallery);

  if (m.dmsm.dim() != config.dmsm_dim) {
    throw InvalidArgument("DMSM checkpoint has dimension " + std::to_string(m.dmsm.dim()) +
                          ", config expects " + std::to_string(config.dmsm_dim));
  }
  const std::size_t features = m.coco.feature_channels() + m.web.feature_channels();
  if (m.dmsm.image_input_dim() != features) {
    throw ShapeError("DMSM image tower expects " + std::to_string(m.dmsm.image_input_dim()) +
                     " features, detectors provide " + std::to_string(features));
  }
  if (m.confidence.dim() != 2 * m.dmsm.dim() + 5) {
    throw ShapeError("confidence model has " + std::to_string(m.confidence.dim()) +
                     " inputs, expected " + std::to_string(2 * m.dmsm.dim() + 5));
  }
  m.identifiers = {{"vision_coco", file_digest(config.vision_coco)},
                   {"vision_web", file_digest(config.vision_web)},
                   {"language_model", file_digest(config.language_model)},
                   {"dmsm", file_digest(config.dmsm)},
                   {"confidence", file_digest(config.confidence)},
                   {"gallery", file_digest(config.gallery)}};
  return m;
}

std::vector<double> joint_features(const vision::VisionNet& coco, const vision::VisionNet& web,
                                   const Tensor& image) {
  const Tensor batch = as_batch(image);
  return joint_features(coco, web, std::span<const Tensor>(&batch, 1)).front();
}

std::vector<std::vector<double>> joint_features(const vision::VisionNet& coco,
                                                const vision::VisionNet& web,
                                                std::span<const Tensor> images) {
  constexpr std::size_t kChunk = 64;
  std::vector<std::vector<double>> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, images.size() - start);
    const Tensor first = as_image(images[start]);
    Tensor batch({n, first.dim(0), first.dim(1), first.dim(2)});
    const std::size_t stride = first.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& img = images[start + i];
      if (img.size() != stride) throw ShapeError("joint_features: images differ in size");
      std::copy(img.data().begin(), img.data().end(),
                batch.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    const Tensor a = vision::pooled_features(coco, batch);
    const Tensor b = vision::pooled_features(web, batch);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row;
      row.reserve(a.dim(1) + b.dim(1));
      for (std::size_t k = 0; k < a.dim(1); ++k) row.push_back(a.at(i, k));
      for (std::size_t k = 0; k < b.dim(1); ++k) row.push_back(b.at(i, k));
      out.push_back(std::move(row));
    }
  }
  return out;
}

confidence::ConfidenceFeatures candidate_features(const dmsm::RankedCandidate& ranked,
                                                  std::span<const std::string> final_words) {
  return confidence::assemble_features(ranked.image.values, ranked.caption.values,
                                       ranked.candidate.lm_score, final_words,
                                       ranked.candidate.covered_tags.size(), ranked.dmsm_score);
}

// --- results ------------------------------------------------------------------------

std::string to_json(const CaptionResult& r, bool include_latencies) {
  json tags = json::array();
  for (const auto& t : r.tags) tags.push_back({{"tag", t.tag}, {"score", t.score}});
  json entities = json::array();
  for (const auto& e : r.entities) {
    entities.push_back({{"name", e.name},
                        {"kind", entity::kind_name(e.kind)},
                        {"similarity", e.similarity}});
  }
  json doc = {{"caption", r.caption},
              {"confidence", r.confidence},
              {"tags", tags},
              {"entities", entities},
              {"candidates_considered", r.candidates_considered},
              {"low_confidence_fallback_used", r.low_confidence_fallback_used}};
  if (include_latencies) doc["stage_latencies"] = r.stage_latencies;
  return doc.dump();
}

CaptionResult result_from_json(std::string_view text) {
  try {
    const json doc = json::parse(text);
    CaptionResult r;
    r.caption = doc.at("caption").get<std::string>();
    r.confidence = doc.at("confidence").get<double>();
    for (const auto& t : doc.at("tags")) {
      r.tags.push_back({t.at("tag").get<std::string>(), t.at("score").get<double>()});
    }
    for (const auto& e : doc.at("entities")) {
      entity::EntityMatch m;
      m.name = e.at("name").get<std::string>();
      m.kind = entity::parse_kind(e.at("kind").get<std::string>());
      m.similarity = e.at("similarity").get<double>();
      m.matched = true;
      r.entities.push_back(std::move(m));
    }
    r.candidates_considered = doc.at("candidates_considered").get<std::size_t>();
    r.low_confidence_fallback_used = doc.at("low_confidence_fallback_used").get<bool>();
    if (doc.contains("stage_latencies")) {
      r.stage_latencies = doc.at("stage_latencies").get<std::map<std::string, double>>();
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("caption result: ") + e.what());
  }
}

bool same_outcome(const CaptionResult& a, const CaptionResult& b) {
  auto same_entity = [](const entity::EntityMatch& x, const entity::EntityMatch& y) {
    return x.name == y.name && x.kind == y.kind && x.similarity == y.similarity &&
           x.matched == y.matched;
  };
  return a.caption == b.caption && a.confidence == b.confidence && a.tags == b.tags &&
         std::equal(a.entities.begin(), a.entities.end(), b.entities.begin(), b.entities.end(),
                    same_entity) &&
         a.candidates_considered == b.candidates_considered &&
         a.low_confidence_fallback_used == b.low_confidence_fallback_used;
}

// --- pipeline -----------------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig config) : Pipeline(config, load_models(config)) {}

Pipeline::Pipeline(PipelineConfig config, Models models)
    : config_(std::move(config)), models_(std::move(models)) {
  config_.validate();
}

Pipeline::Trace Pipeline::trace(const Tensor& input,
                                std::map<std::string, double>* sink) const {
  std::map<std::string, double> unused;
  auto& latencies = sink ? *sink : unused;
  const Models& m = models_;
  Trace t;

  run_stage("vision", latencies, [&] {
    t.image = as_image(input);
    const Tensor batch = as_batch(input);
    const Tensor pa = vision::pooled_features(m.coco, batch);
    const Tensor pb = vision::pooled_features(m.web, batch);
    auto detections = [](const vision::VisionNet& net, const Tensor& pooled) {
      const Tensor probs = ops::sigmoid(ops::affine(pooled, net.head_weights, net.head_bias));
      vision::ConceptDetections d;
      d.tags = net.vocabulary.tags();
      d.scores.assign(probs.data().begin(), probs.data().end());
      return d;
    };
    const auto merged = vision::dual_detector(detections(m.coco, pa), detections(m.web, pb));
    for (std::size_t i = 0; i < merged.tags.size(); ++i) {
      if (merged.scores[i] >= config_.tag_threshold) {
        t.tag_scores.push_back({merged.tags[i], merged.scores[i]});
        t.tags.insert(merged.tags[i]);
      }
    }
    t.features.assign(pa.data().begin(), pa.data().end());
    t.features.insert(t.features.end(), pb.data().begin(), pb.data().end());
  });

  const auto candidates = run_stage("language_model", latencies, [&] {
    auto beam = lm::beam_search(m.language_model, t.tags, config_.beam_width,
                                config_.max_caption_length);
    std::erase_if(beam, [](const lm::CaptionCandidate& c) { return c.words.empty(); });
    // Completed captions first; relative order otherwise kept.
    std::stable_partition(beam.begin(), beam.end(),
                          [](const lm::CaptionCandidate& c) { return c.finished; });
    if (beam.size() > config_.candidate_count) beam.resize(config_.candidate_count);
    if (beam.empty()) throw InvalidArgument("no non-empty caption candidates");
    return beam;
  });
  t.candidates_considered = candidates.size();

  run_stage("dmsm", latencies, [&] {
    t.best = dmsm::rank_candidates(m.dmsm, t.features, candidates).front();
  });

  run_stage("entity", latencies, [&] {
    if (!m.gallery.empty()) {
      if (const auto probe = synth::descriptor_from_image(t.image)) {
        t.entities = entity::recognize(m.gallery, *probe, config_.entity_threshold);
      }
    }
    std::erase_if(t.entities, [](const entity::EntityMatch& e) { return !e.matched; });
    t.words = entity::enrich_caption(t.best.candidate.words, t.entities);
  });
  return t;
}

CaptionResult Pipeline::caption(const Tensor& input) const {
  CaptionResult result;
  Trace t = trace(input, &result.stage_latencies);
  result.tags = std::move(t.tag_scores);
  result.entities = t.entities;
  result.candidates_considered = t.candidates_considered;
  run_stage("confidence", result.stage_latencies, [&] {
    result.confidence =
        confidence::confidence_score(models_.confidence, candidate_features(t.best, t.words));
    result.caption = text::join(t.words);
    if (result.confidence < config_.confidence_fallback_threshold) {
      result.caption = "maybe " + result.caption;
      result.low_confidence_fallback_used = true;
    }
  });
  return result;
}

CaptionResult caption_image(const PipelineConfig& config, const Tensor& image) {
  return Pipeline(config).caption(image);
}

}  // namespace capforge::pipeline
