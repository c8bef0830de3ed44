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

#include "capforge/training.hpp"

#include <filesystem>
#include <fstream>
#include <string>

#include "capforge/errors.hpp"
#include "capforge/random.hpp"
#include "capforge/text.hpp"

namespace capforge::pipeline {
namespace fs = std::filesystem;

namespace {

void say(const TrainingPlan& plan, const std::string& message) {
  if (plan.log) plan.log(message);
}

void ensure_parent(const std::string& path) {
  const auto dir = fs::path(path).parent_path();
  if (!dir.empty()) fs::create_directories(dir);
}

std::vector<synth::LabeledExample> training_corpus(const TrainingPlan& plan) {
  return synth::generate_corpus(plan.seed, plan.train_size);
}

dmsm::RankedCandidate rank_one(const Models& models, std::span<const double> features,
                               const std::string& caption, const lm::TagSet& tags) {
  lm::CaptionCandidate c;
  c.words = text::tokenize(caption);
  c.lm_score = models.language_model.score_caption(c.words, tags);
  for (const auto& w : c.words) {
    if (tags.contains(w)) c.covered_tags.insert(w);
  }
  c.finished = true;
  return dmsm::rank_candidates(models.dmsm, features, std::span(&c, 1)).front();
}

// A color and a shape swapped; two colors when every shape is already taken.
std::string corrupt_twice(const std::string& caption, std::uint64_t seed) {
  const auto once = synth::corrupt_caption(caption, seed, synth::SwapKind::kColor);
  try {
    return synth::corrupt_caption(once, seed + 1, synth::SwapKind::kShape);
  } catch (const InvalidArgument&) {
    return synth::corrupt_caption(once, seed + 1, synth::SwapKind::kColor);
  }
}

}  // namespace

std::vector<std::string> vocabulary_tags(const vision::TagVocabulary& vocab,
                                         std::span<const std::string> tags) {
  std::vector<std::string> out;
  for (const auto& t : tags) {
    if (vocab.index_of(t)) out.push_back(t);
  }
  return out;
}

std::vector<lm::CaptionExample> lm_corpus(std::span<const synth::LabeledExample> corpus) {
  std::vector<lm::CaptionExample> out;
  out.reserve(corpus.size());
  for (const auto& ex : corpus) {
    out.push_back({ex.caption, lm::TagSet(ex.tags.begin(), ex.tags.end())});
  }
  return out;
}

std::vector<dmsm::DmsmPair> dmsm_pairs(const vision::VisionNet& coco, const vision::VisionNet& web,
                                       std::span<const synth::LabeledExample> corpus) {
  std::vector<Tensor> images;
  images.reserve(corpus.size());
  for (const auto& ex : corpus) images.push_back(ex.image);
  auto features = joint_features(coco, web, images);
  std::vector<dmsm::DmsmPair> pairs;
  pairs.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    pairs.push_back({std::move(features[i]), corpus[i].caption});
  }
  return pairs;
}

std::vector<confidence::LabeledFeatures> confidence_examples(
    const Models& models, const PipelineConfig& config,
    std::span<const synth::LabeledExample> corpus) {
  using confidence::QualityLabel;
  const Pipeline pipeline(config, models);
  std::vector<confidence::LabeledFeatures> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& ex = corpus[i];
    const auto trace = pipeline.trace(ex.image);
    auto add = [&](const dmsm::RankedCandidate& ranked, QualityLabel label) {
      const auto words = entity::enrich_caption(ranked.candidate.words, trace.entities);
      out.push_back({candidate_features(ranked, words).flatten(), label});
    };
    auto scored = [&](const std::string& caption) {
      return rank_one(models, trace.features, caption, trace.tags);
    };
    const std::uint64_t seed = rnd::splitmix64(i);

    add(scored(ex.caption), QualityLabel::kExcellent);
    const bool faithful = synth::caption_tags(trace.best.candidate.text()) == ex.tags;
    add(trace.best, faithful ? QualityLabel::kGood : QualityLabel::kBad);
    add(scored(synth::corrupt_caption(ex.caption, seed)), QualityLabel::kBad);
    add(scored(corrupt_twice(ex.caption, seed)), QualityLabel::kEmbarrassing);
  }
  return out;
}

void train_vision_step(const TrainingPlan& plan, const PipelineConfig& config) {
  const auto corpus = training_corpus(plan);
  std::vector<Tensor> images;
  for (const auto& ex : corpus) images.push_back(ex.image);
  const std::pair<vision::TagVocabulary, const std::string*> jobs[] = {
      {vision::TagVocabulary::coco_style(), &config.vision_coco},
      {vision::TagVocabulary::web_style(), &config.vision_web}};
  for (const auto& [vocab, path] : jobs) {
    std::vector<std::vector<std::string>> tags;
    for (const auto& ex : corpus) tags.push_back(vocabulary_tags(vocab, ex.tags));
    auto net = vision::build_network({}, vocab);
    const std::string name(vision::source_name(vocab.source()));
    vision::train_multilabel(net, images, tags, plan.vision, [&](std::size_t epoch, double loss) {
      say(plan, "vision " + name + " epoch " + std::to_string(epoch) + " loss " +
                    std::to_string(loss));
    });
    ensure_parent(*path);
    vision::save_network(*path, net);
    say(plan, "wrote " + *path);
  }
}

void train_lm_step(const TrainingPlan& plan, const PipelineConfig& config) {
  const auto corpus = lm_corpus(training_corpus(plan));
  const auto model = lm::train_lm(corpus, plan.language_model, nullptr,
                                  [&](std::size_t epoch, double ll) {
                                    if (epoch % 50 == 0) {
                                      say(plan, "lm epoch " + std::to_string(epoch) +
                                                    " log-likelihood " + std::to_string(ll));
                                    }
                                  });
  ensure_parent(config.language_model);
  model.save(config.language_model);
  say(plan, "wrote " + config.language_model);
}

void train_dmsm_step(const TrainingPlan& plan, const PipelineConfig& config) {
  const auto coco = vision::load_network(config.vision_coco);
  const auto web = vision::load_network(config.vision_web);
  const auto pairs = dmsm_pairs(coco, web, training_corpus(plan));
  dmsm::DmsmConfig dc = plan.dmsm;
  dc.dim = config.dmsm_dim;
  const auto model = dmsm::train_dmsm(pairs, dc, nullptr, [&](std::size_t epoch, double loss) {
    say(plan, "dmsm epoch " + std::to_string(epoch) + " loss " + std::to_string(loss));
  });
  ensure_parent(config.dmsm);
  dmsm::save_model(config.dmsm, model);
  say(plan, "wrote " + config.dmsm);
}

void train_confidence_step(const TrainingPlan& plan, const PipelineConfig& config) {
  if (!fs::exists(config.gallery)) {
    ensure_parent(config.gallery);
    std::ofstream out(config.gallery);
    out << synth::gallery_json();
    if (!out) throw IoError("cannot write " + config.gallery);
    say(plan, "wrote " + config.gallery);
  }
  Models models;
  models.coco = vision::load_network(config.vision_coco);
  models.web = vision::load_network(config.vision_web);
  models.language_model = lm::LanguageModel::load(config.language_model);
  models.dmsm = dmsm::load_model(config.dmsm);
  models.gallery = entity::build_gallery(config.gallery);
  const auto corpus =
      synth::generate_corpus(plan.seed, plan.confidence_size, plan.confidence_offset);
  const auto examples = confidence_examples(models, config, corpus);
  confidence::TrainingReport report;
  const auto model = confidence::train_confidence(examples, plan.confidence, &report);
  say(plan, "confidence: " + std::to_string(examples.size()) + " examples, loss " +
                std::to_string(report.final_loss) + " after " +
                std::to_string(report.iterations) + " iterations");
  ensure_parent(config.confidence);
  model.save(config.confidence);
  say(plan, "wrote " + config.confidence);
}

void train_all(const TrainingPlan& plan, const PipelineConfig& config) {
  train_vision_step(plan, config);
  train_lm_step(plan, config);
  train_dmsm_step(plan, config);
  train_confidence_step(plan, config);
}

}  // namespace capforge::pipeline
