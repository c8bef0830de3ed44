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

#include "capforge/caption_lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "capforge/errors.hpp"
#include "capforge/tensor.hpp"
#include "capforge/text.hpp"

namespace capforge::lm {
namespace {

constexpr char kMagic[4] = {'C', 'F', 'L', 'M'};
constexpr std::uint16_t kFormatVersion = 1;
constexpr std::size_t kMaxOrder = 3;
constexpr std::size_t kWordBits = 14;
constexpr std::size_t kMaxVocabulary = std::size_t{1} << kWordBits;
constexpr std::size_t kStartId = 0;
constexpr std::size_t kEndId = 1;

enum Template : std::uint64_t { kNgram = 0, kRemaining = 1, kCovered = 2, kDone = 3 };

// | template:3 | k:2 | h3:14 | h2:14 | h1:14 | w:14 |, h1 the most recent word.
std::uint64_t pack(Template t, std::size_t k, std::span<const std::size_t> recent,
                   std::size_t word) {
  std::uint64_t key = (static_cast<std::uint64_t>(t) << 58) |
                      (static_cast<std::uint64_t>(k) << 56) | word;
  for (std::size_t i = 0; i < k; ++i) {
    key |= static_cast<std::uint64_t>(recent[i]) << (kWordBits * (i + 1));
  }
  return key;
}

TagSet normalize_tags(const TagSet& tags) {
  TagSet out;
  for (const auto& t : tags) out.insert(text::lowercase(t));
  return out;
}

double log_sum_exp(std::span<const double> x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  double s = 0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

// --- corpus files ---------------------------------------------------------------

std::vector<CaptionExample> read_corpus(std::istream& in) {
  std::vector<CaptionExample> corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = text::split(line, '\t');
    if (fields.size() != 2) {
      throw FormatError("corpus line " + std::to_string(line_no) +
                        ": expected caption<TAB>tags");
    }
    CaptionExample ex;
    ex.caption = fields[0];
    for (const auto& t : text::split(fields[1], ',')) {
      if (!t.empty()) ex.tags.insert(text::lowercase(t));
    }
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

std::vector<CaptionExample> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus " + path);
  return read_corpus(in);
}

void write_corpus(std::ostream& out, std::span<const CaptionExample> corpus) {
  for (const auto& ex : corpus) {
    out << ex.caption << '\t'
        << text::join(std::vector<std::string>(ex.tags.begin(), ex.tags.end()), ",") << '\n';
  }
}

void save_corpus(const std::string& path, std::span<const CaptionExample> corpus) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write corpus " + path);
  write_corpus(out, corpus);
}

// --- model ----------------------------------------------------------------------

struct LanguageModel::Context {
  std::vector<std::size_t> recent;  // most recent first, length order()
  std::vector<bool> remaining;      // by word id
  std::vector<bool> covered;
  bool none_remaining = true;
};

std::size_t LanguageModel::word_id(std::string_view word) const {
  const auto it = ids_.find(std::string(word));
  if (it == ids_.end()) {
    throw InvalidArgument("language model: unknown word '" + std::string(word) + "'");
  }
  return it->second;
}

LanguageModel::Context LanguageModel::make_context(std::span<const std::size_t> history,
                                                   const TagSet& remaining,
                                                   const TagSet& covered) const {
  Context ctx;
  ctx.recent.assign(order_, kStartId);
  for (std::size_t i = 0; i < order_ && i < history.size(); ++i) {
    ctx.recent[i] = history[history.size() - 1 - i];
  }
  ctx.remaining.assign(vocab_.size(), false);
  ctx.covered.assign(vocab_.size(), false);
  for (const auto& t : remaining) {
    const auto it = ids_.find(t);
    if (it == ids_.end() || it->second <= kEndId) continue;
    ctx.remaining[it->second] = true;
    ctx.none_remaining = false;
  }
  for (const auto& t : covered) {
    const auto it = ids_.find(t);
    if (it != ids_.end() && it->second > kEndId) ctx.covered[it->second] = true;
  }
  return ctx;
}

void LanguageModel::candidate_features(const Context& ctx, std::size_t word,
                                       std::vector<std::uint64_t>& keys) const {
  keys.clear();
  for (std::size_t k = 0; k <= order_; ++k) keys.push_back(pack(kNgram, k, ctx.recent, word));
  if (ctx.remaining[word]) keys.push_back(pack(kRemaining, 0, {}, word));
  if (ctx.covered[word]) keys.push_back(pack(kCovered, 0, {}, word));
  if (word == kEndId && ctx.none_remaining) keys.push_back(pack(kDone, 0, {}, word));
}

std::vector<double> LanguageModel::distribution(const Context& ctx) const {
  std::vector<double> score(vocab_.size(), 0.0);
  std::vector<std::uint64_t> keys;
  for (std::size_t w = kEndId; w < vocab_.size(); ++w) {
    candidate_features(ctx, w, keys);
    for (auto key : keys) {
      const auto it = weights_.find(key);
      if (it != weights_.end()) score[w] += it->second;
    }
  }
  const double z = log_sum_exp(std::span<const double>(score).subspan(kEndId));
  std::vector<double> p(vocab_.size(), 0.0);
  for (std::size_t w = kEndId; w < vocab_.size(); ++w) p[w] = std::exp(score[w] - z);
  return p;
}

std::vector<double> LanguageModel::next_word_distribution(std::span<const std::string> history,
                                                          const TagSet& remaining,
                                                          const TagSet& covered) const {
  if (vocab_.empty()) throw InvalidArgument("language model: empty model");
  std::vector<std::size_t> ids;
  for (const auto& w : history) ids.push_back(word_id(text::lowercase(w)));
  return distribution(make_context(ids, normalize_tags(remaining), normalize_tags(covered)));
}

double LanguageModel::score_caption(const std::vector<std::string>& words,
                                    const TagSet& tags) const {
  TagSet remaining = normalize_tags(tags), covered;
  std::vector<std::size_t> history;
  double total = 0;
  for (std::size_t i = 0; i <= words.size(); ++i) {
    const std::size_t target = i < words.size() ? word_id(text::lowercase(words[i])) : kEndId;
    total += std::log(distribution(make_context(history, remaining, covered))[target]);
    if (i < words.size()) {
      const std::string& w = vocab_[target];
      if (remaining.erase(w)) covered.insert(w);
      history.push_back(target);
    }
  }
  return total;
}

LanguageModel LanguageModel::uniform(std::vector<std::string> words, std::size_t order) {
  if (order > kMaxOrder) {
    throw InvalidArgument("language model: order " + std::to_string(order) +
                          " exceeds the supported maximum of " + std::to_string(kMaxOrder));
  }
  LanguageModel m;
  m.order_ = order;
  m.vocab_ = {std::string(kStart), std::string(kEnd)};
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  for (auto& w : words) {
    if (w == kStart || w == kEnd) continue;
    m.vocab_.push_back(text::lowercase(w));
  }
  if (m.vocab_.size() > kMaxVocabulary) {
    throw InvalidArgument("language model: vocabulary of " + std::to_string(m.vocab_.size()) +
                          " words exceeds " + std::to_string(kMaxVocabulary));
  }
  for (std::size_t i = 0; i < m.vocab_.size(); ++i) m.ids_[m.vocab_[i]] = i;
  return m;
}

std::vector<std::pair<std::uint64_t, double>> LanguageModel::weight_table() const {
  std::vector<std::pair<std::uint64_t, double>> table(weights_.begin(), weights_.end());
  std::sort(table.begin(), table.end());
  return table;
}

void LanguageModel::set_weight(std::uint64_t key, double value) { weights_[key] = value; }

void LanguageModel::save(std::ostream& out) const {
  const nlohmann::json header = {{"vocabulary", vocab_},
                                 {"order", order_},
                                 {"template_version", kTemplateVersion}};
  const std::string json = header.dump();
  out.write(kMagic, 4);
  io::write_u16(out, kFormatVersion);
  io::write_u32(out, static_cast<std::uint32_t>(json.size()));
  out.write(json.data(), static_cast<std::streamsize>(json.size()));
  const auto table = weight_table();
  io::write_u32(out, static_cast<std::uint32_t>(table.size()));
  for (const auto& [key, w] : table) {
    io::write_u64(out, key);
    io::write_f64(out, w);
  }
  if (!out) throw IoError("language model: write failed");
}

LanguageModel LanguageModel::load(std::istream& in) {
  char magic[4];
  io::read_exact(in, magic, 4);
  if (!std::equal(magic, magic + 4, kMagic)) throw FormatError("not a language model file");
  const auto version = io::read_u16(in);
  if (version != kFormatVersion) {
    throw FormatError("language model: unsupported version " + std::to_string(version));
  }
  std::string json(io::read_u32(in), '\0');
  io::read_exact(in, json.data(), json.size());
  const auto header = nlohmann::json::parse(json);
  if (header.at("template_version").get<std::uint32_t>() != kTemplateVersion) {
    throw FormatError("language model: feature template version mismatch");
  }
  const auto vocab = header.at("vocabulary").get<std::vector<std::string>>();
  if (vocab.size() < 2 || vocab[0] != kStart || vocab[1] != kEnd) {
    throw FormatError("language model: vocabulary must begin with the start and end markers");
  }
  LanguageModel m = uniform({vocab.begin() + 2, vocab.end()},
                            header.at("order").get<std::size_t>());
  if (m.vocab_ != vocab) throw FormatError("language model: vocabulary is not sorted");
  const std::uint32_t count = io::read_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto key = io::read_u64(in);
    const double w = io::read_f64(in);
    if (!std::isfinite(w)) throw FormatError("language model: non-finite weight");
    m.weights_[key] = w;
  }
  return m;
}

void LanguageModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  save(out);
}

LanguageModel LanguageModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  return load(in);
}

// --- training -------------------------------------------------------------------

struct Trainer {
  LanguageModel model;
  std::size_t outputs = 0;  // candidate words: vocabulary minus the start marker
  std::vector<std::uint64_t> keys;
  // Feature indices per (event, candidate), flattened.
  std::vector<std::uint32_t> features;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> targets;  // candidate index of the true word
  std::size_t events = 0;

  static LanguageModel fit(std::span<const CaptionExample> corpus, const LmConfig& config,
                           TrainingReport* report, const EpochCallback& on_epoch);

  std::span<const std::uint32_t> active(std::size_t event, std::size_t cand) const {
    const std::size_t slot = event * outputs + cand;
    return {features.data() + offsets[slot], offsets[slot + 1] - offsets[slot]};
  }

  // Per-token log-likelihood and its gradient (without the penalty).
  double evaluate(const std::vector<double>& w, std::vector<double>* grad) const {
    if (grad) grad->assign(w.size(), 0.0);
    std::vector<double> score(outputs);
    double ll = 0;
    for (std::size_t e = 0; e < events; ++e) {
      for (std::size_t c = 0; c < outputs; ++c) {
        double s = 0;
        for (auto f : active(e, c)) s += w[f];
        score[c] = s;
      }
      const double z = log_sum_exp(score);
      ll += score[targets[e]] - z;
      if (!grad) continue;
      for (std::size_t c = 0; c < outputs; ++c) {
        const double p = std::exp(score[c] - z);
        for (auto f : active(e, c)) (*grad)[f] -= p;
      }
      for (auto f : active(e, targets[e])) (*grad)[f] += 1.0;
    }
    const double scale = 1.0 / static_cast<double>(events);
    if (grad) {
      for (auto& g : *grad) g *= scale;
    }
    return ll;
  }
};

LanguageModel train_lm(std::span<const CaptionExample> corpus, const LmConfig& config,
                       TrainingReport* report, const EpochCallback& on_epoch) {
  return Trainer::fit(corpus, config, report, on_epoch);
}

LanguageModel Trainer::fit(std::span<const CaptionExample> corpus, const LmConfig& config,
                           TrainingReport* report, const EpochCallback& on_epoch) {
  if (corpus.empty()) throw InvalidArgument("train_lm: empty corpus");
  std::vector<std::vector<std::string>> tokens;
  std::vector<std::string> words;
  for (const auto& ex : corpus) {
    tokens.push_back(text::tokenize(ex.caption));
    words.insert(words.end(), tokens.back().begin(), tokens.back().end());
  }
  Trainer t;
  t.model = LanguageModel::uniform(std::move(words), config.order);
  const LanguageModel& m = t.model;
  t.outputs = m.vocab_.size() - 1;

  // Enumerate events and their candidate feature keys.
  std::vector<std::vector<std::uint64_t>> event_keys;  // per (event, candidate)
  std::unordered_map<std::uint64_t, std::uint32_t> index;
  std::vector<std::uint64_t> scratch;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    TagSet remaining = normalize_tags(corpus[i].tags), covered;
    std::vector<std::size_t> history;
    for (std::size_t pos = 0; pos <= tokens[i].size(); ++pos) {
      const std::size_t target = pos < tokens[i].size() ? m.word_id(tokens[i][pos]) : kEndId;
      const auto ctx = m.make_context(history, remaining, covered);
      for (std::size_t w = kEndId; w < m.vocab_.size(); ++w) {
        m.candidate_features(ctx, w, scratch);
        event_keys.push_back(scratch);
        if (w == target) {
          for (auto key : scratch) {
            index.try_emplace(key, static_cast<std::uint32_t>(index.size()));
          }
        }
      }
      t.targets.push_back(target - kEndId);
      ++t.events;
      if (pos < tokens[i].size()) {
        const std::string& w = m.vocab_[target];
        if (remaining.erase(w)) covered.insert(w);
        history.push_back(target);
      }
    }
  }
  t.offsets.push_back(0);
  for (const auto& ks : event_keys) {
    for (auto key : ks) {
      const auto it = index.find(key);
      if (it != index.end()) t.features.push_back(it->second);
    }
    t.offsets.push_back(t.features.size());
  }
  event_keys.clear();

  std::vector<double> w(index.size(), 0.0), grad, trial_grad;
  auto objective = [&](const std::vector<double>& v, double ll) {
    double sq = 0;
    for (double x : v) sq += x * x;
    return ll / static_cast<double>(t.events) - 0.5 * config.l2 * sq;
  };
  double ll = t.evaluate(w, &grad);
  for (std::size_t i = 0; i < w.size(); ++i) grad[i] -= config.l2 * w[i];
  double obj = objective(w, ll);
  double step = config.initial_step;
  TrainingReport local;
  local.tokens = t.events;
  std::vector<double> trial(w.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    bool improved = false;
    for (int attempt = 0; attempt < 60 && !improved; ++attempt) {
      for (std::size_t i = 0; i < w.size(); ++i) trial[i] = w[i] + step * grad[i];
      const double trial_ll = t.evaluate(trial, &trial_grad);
      const double trial_obj = objective(trial, trial_ll);
      if (trial_obj >= obj) {
        w.swap(trial);
        grad.swap(trial_grad);
        for (std::size_t i = 0; i < w.size(); ++i) grad[i] -= config.l2 * w[i];
        ll = trial_ll;
        obj = trial_obj;
        step *= 1.25;
        improved = true;
      } else {
        step *= 0.5;
      }
    }
    local.log_likelihood.push_back(ll);
    local.objective.push_back(obj);
    if (on_epoch) on_epoch(epoch, ll);
    if (!improved) break;  // at a stationary point within floating-point resolution
  }

  std::vector<std::uint64_t> by_index(index.size());
  for (const auto& [key, i] : index) by_index[i] = key;
  for (std::size_t i = 0; i < w.size(); ++i) t.model.weights_[by_index[i]] = w[i];
  if (report) *report = std::move(local);
  return std::move(t.model);
}

double perplexity(const LanguageModel& model, std::span<const CaptionExample> corpus) {
  if (corpus.empty()) throw InvalidArgument("perplexity: empty corpus");
  double total = 0;
  std::size_t tokens = 0;
  for (const auto& ex : corpus) {
    const auto words = text::tokenize(ex.caption);
    total += model.score_caption(words, ex.tags);
    tokens += words.size() + 1;
  }
  return std::exp(-total / static_cast<double>(tokens));
}

// --- decoding -------------------------------------------------------------------

std::string CaptionCandidate::text() const { return text::join(words); }

namespace {

struct Hypothesis {
  std::vector<std::size_t> ids;
  CaptionCandidate candidate;
  TagSet remaining;
};

bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.candidate.lm_score != b.candidate.lm_score) {
    return a.candidate.lm_score > b.candidate.lm_score;
  }
  if (a.candidate.words != b.candidate.words) return a.candidate.words < b.candidate.words;
  return a.candidate.finished < b.candidate.finished;
}

}  // namespace

std::vector<CaptionCandidate> beam_search(const LanguageModel& model, const TagSet& tags,
                                          std::size_t beam_width, std::size_t max_len) {
  if (beam_width == 0) throw InvalidArgument("beam_search: beam width must be >= 1");
  if (max_len == 0) throw InvalidArgument("beam_search: max_len must be >= 1");
  const auto& vocab = model.vocabulary();
  std::vector<Hypothesis> beam(1);
  beam[0].remaining = normalize_tags(tags);
  for (std::size_t step = 0; step < max_len; ++step) {
    std::vector<Hypothesis> next;
    bool expanded = false;
    for (const auto& h : beam) {
      if (h.candidate.finished) {
        next.push_back(h);
        continue;
      }
      expanded = true;
      const auto p = model.next_word_distribution(h.candidate.words, h.remaining,
                                                  h.candidate.covered_tags);
      for (std::size_t w = kEndId; w < vocab.size(); ++w) {
        if (!(p[w] > 0)) continue;
        Hypothesis n = h;
        n.candidate.lm_score += std::log(p[w]);
        if (w == kEndId) {
          n.candidate.finished = true;
        } else {
          n.ids.push_back(w);
          n.candidate.words.push_back(vocab[w]);
          if (n.remaining.erase(vocab[w])) n.candidate.covered_tags.insert(vocab[w]);
        }
        next.push_back(std::move(n));
      }
    }
    if (!expanded) break;
    const std::size_t keep = std::min(beam_width, next.size());
    std::partial_sort(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(keep),
                      next.end(), better);
    next.resize(keep);
    beam = std::move(next);
  }
  std::sort(beam.begin(), beam.end(), better);
  std::vector<CaptionCandidate> out;
  for (auto& h : beam) out.push_back(std::move(h.candidate));
  return out;
}

}  // namespace capforge::lm
