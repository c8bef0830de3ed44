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

#ifndef CAPFORGE_CAPTION_LM_HPP_
#define CAPFORGE_CAPTION_LM_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace capforge::lm {

inline constexpr std::string_view kStart = "<s>";
inline constexpr std::string_view kEnd = "</s>";
inline constexpr std::uint32_t kTemplateVersion = 1;

using TagSet = std::set<std::string>;

struct CaptionExample {
  std::string caption;
  TagSet tags;
};

// Corpus file: one example per line, "caption<TAB>tag,tag,...".
std::vector<CaptionExample> read_corpus(std::istream& in);
std::vector<CaptionExample> load_corpus(const std::string& path);
void write_corpus(std::ostream& out, std::span<const CaptionExample> corpus);
void save_corpus(const std::string& path, std::span<const CaptionExample> corpus);

struct LmConfig {
  std::size_t order = 3;     // history length
  double l2 = 1e-4;          // penalty on the per-token objective
  std::size_t epochs = 300;  // full-batch ascent steps
  double initial_step = 4.0;
};

// Log-linear next-word model. Features, each binary and conjunctive with the
// candidate word w:
//   n-gram:    the last k history words, k = 0..order
//   remaining: w is a conditioning tag not yet emitted
//   covered:   w is a conditioning tag already emitted
//   done:      w is the end marker and no tags remain
// Only features observed with the true next word during training get weights.
class LanguageModel {
 public:
  LanguageModel() = default;

  // Index 0 is the start marker, index 1 the end marker.
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  std::size_t order() const { return order_; }
  std::size_t feature_count() const { return weights_.size(); }
  std::size_t word_id(std::string_view word) const;  // throws on unknown
  bool contains(std::string_view word) const { return ids_.contains(std::string(word)); }

  // Distribution aligned with vocabulary(); the start marker gets 0.
  // Only the last order() history words are used; shorter histories are
  // padded with start markers.
  std::vector<double> next_word_distribution(std::span<const std::string> history,
                                             const TagSet& remaining,
                                             const TagSet& covered = {}) const;

  // Sum of natural-log step probabilities, end marker included.
  double score_caption(const std::vector<std::string>& words, const TagSet& tags) const;

  void save(std::ostream& out) const;
  static LanguageModel load(std::istream& in);
  void save(const std::string& path) const;
  static LanguageModel load(const std::string& path);

  // All weights zero over the given vocabulary (start/end markers added).
  static LanguageModel uniform(std::vector<std::string> words, std::size_t order = 3);

  // Direct access for tests and tooling.
  std::vector<std::pair<std::uint64_t, double>> weight_table() const;
  void set_weight(std::uint64_t key, double value);

  friend struct Trainer;

 private:
  struct Context;
  Context make_context(std::span<const std::size_t> history, const TagSet& remaining,
                       const TagSet& covered) const;
  void candidate_features(const Context& ctx, std::size_t word,
                          std::vector<std::uint64_t>& keys) const;
  std::vector<double> distribution(const Context& ctx) const;

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::size_t> ids_;
  std::size_t order_ = 3;
  std::unordered_map<std::uint64_t, double> weights_;
};

struct TrainingReport {
  std::vector<double> log_likelihood;  // total over the corpus, per epoch
  std::vector<double> objective;       // per-token log-likelihood minus penalty
  std::size_t tokens = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double log_likelihood)>;

// Gradient ascent with a backtracking step, so the objective never decreases.
LanguageModel train_lm(std::span<const CaptionExample> corpus, const LmConfig& config,
                       TrainingReport* report = nullptr,
                       const EpochCallback& on_epoch = {});

// exp(-mean log-probability per token), end markers counted as tokens.
double perplexity(const LanguageModel& model, std::span<const CaptionExample> corpus);

struct CaptionCandidate {
  std::vector<std::string> words;  // end marker excluded
  double lm_score = 0;             // natural-log probability, <= 0
  TagSet covered_tags;
  bool finished = false;           // emitted the end marker

  std::string text() const;
};

// Candidates sorted by lm_score descending; ties by word sequence ascending.
// max_len bounds the number of tokens, end marker included.
std::vector<CaptionCandidate> beam_search(const LanguageModel& model, const TagSet& tags,
                                          std::size_t beam_width, std::size_t max_len);

}  // namespace capforge::lm

#endif  // CAPFORGE_CAPTION_LM_HPP_
