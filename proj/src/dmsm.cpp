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

#include "capforge/dmsm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "capforge/errors.hpp"
#include "capforge/graph.hpp"
#include "capforge/ops.hpp"
#include "capforge/optim.hpp"
#include "capforge/random.hpp"
#include "capforge/text.hpp"

namespace capforge::dmsm {
namespace {

Layer init_layer(std::mt19937_64& rng, std::size_t in, std::size_t out) {
  Layer l{Tensor({in, out}), Tensor({out})};
  const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& w : l.weights.data()) w = static_cast<Scalar>(rnd::normal(rng, 0, stddev));
  return l;
}

Tower init_tower(std::mt19937_64& rng, std::size_t in, std::size_t hidden, std::size_t out) {
  Tower t;
  t.layers.push_back(init_layer(rng, in, hidden));
  t.layers.push_back(init_layer(rng, hidden, out));
  return t;
}

Tensor standardize(const DmsmModel& model, const Tensor& features) {
  const std::size_t f = model.image_input_dim();
  if (features.rank() != 2 || features.dim(1) != f) {
    throw ShapeError("dmsm: image features " + shape_str(features.shape()) + ", expected N x " +
                     std::to_string(f));
  }
  Tensor out = features;
  for (std::size_t r = 0; r < out.dim(0); ++r) {
    for (std::size_t c = 0; c < f; ++c) {
      out.at(r, c) = (out.at(r, c) - model.input_mean[c]) * model.input_scale[c];
    }
  }
  return out;
}

Tensor caption_matrix(const DmsmModel& model, std::span<const std::string> captions) {
  const std::size_t t = model.inventory.size();
  Tensor out({captions.size(), t});
  for (std::size_t i = 0; i < captions.size(); ++i) {
    const auto words = text::tokenize(captions[i]);
    if (words.empty()) throw InvalidArgument("dmsm: empty caption");
    const auto counts = model.inventory.featurize(words);
    for (std::size_t j = 0; j < t; ++j) out.at(i, j) = static_cast<Scalar>(counts[j]);
  }
  return out;
}

Embedding normalized(const Tensor& row, Modality modality) {
  return normalize_embedding(std::vector<double>(row.data().begin(), row.data().end()), modality);
}

Tensor row_of(const Tensor& m, std::size_t r) {
  const std::size_t cols = m.dim(1);
  return Tensor({1, cols}, m.data().subspan(r * cols, cols));
}

std::vector<Embedding> embed_rows(const Tensor& out, Modality modality) {
  std::vector<Embedding> e;
  for (std::size_t r = 0; r < out.dim(0); ++r) e.push_back(normalized(row_of(out, r), modality));
  return e;
}

nlohmann::json config_json(const DmsmConfig& c) {
  return {{"dim", c.dim},
          {"hidden", c.hidden},
          {"negatives", c.negatives},
          {"gamma", c.gamma},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"seed", c.seed}};
}

DmsmConfig config_from_json(const nlohmann::json& j) {
  DmsmConfig c;
  c.dim = j.at("dim");
  c.hidden = j.at("hidden");
  c.negatives = j.at("negatives");
  c.gamma = j.at("gamma");
  c.epochs = j.at("epochs");
  c.batch_size = j.at("batch_size");
  c.learning_rate = j.at("learning_rate");
  c.momentum = j.at("momentum");
  c.weight_decay = j.at("weight_decay");
  c.seed = j.at("seed");
  return c;
}

}  // namespace

// --- text features --------------------------------------------------------------

std::vector<std::string> letter_trigrams(std::string_view word) {
  const std::string padded = "#" + std::string(word) + "#";
  std::vector<std::string> out;
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) out.push_back(padded.substr(i, 3));
  return out;
}

TrigramInventory::TrigramInventory(std::vector<std::string> trigrams)
    : trigrams_(std::move(trigrams)) {
  std::sort(trigrams_.begin(), trigrams_.end());
  trigrams_.erase(std::unique(trigrams_.begin(), trigrams_.end()), trigrams_.end());
  for (std::size_t i = 0; i < trigrams_.size(); ++i) index_[trigrams_[i]] = i;
}

TrigramInventory TrigramInventory::build(std::span<const std::string> captions) {
  std::vector<std::string> all;
  for (const auto& c : captions) {
    for (const auto& w : text::tokenize(c)) {
      for (auto& t : letter_trigrams(w)) all.push_back(std::move(t));
    }
  }
  return TrigramInventory(std::move(all));
}

std::vector<double> TrigramInventory::featurize(std::span<const std::string> words) const {
  std::vector<double> counts(trigrams_.size(), 0.0);
  for (const auto& w : words) {
    for (const auto& t : letter_trigrams(text::lowercase(w))) {
      const auto it = index_.find(t);
      if (it != index_.end()) counts[it->second] += 1.0;
    }
  }
  return counts;
}

// --- towers ---------------------------------------------------------------------

std::size_t Tower::input_dim() const {
  return layers.empty() ? 0 : layers.front().weights.dim(0);
}

std::size_t Tower::output_dim() const {
  return layers.empty() ? 0 : layers.back().weights.dim(1);
}

Tensor Tower::forward(const Tensor& input) const {
  Tensor x = input;
  for (const auto& l : layers) x = ops::tanh(ops::affine(x, l.weights, l.bias));
  return x;
}

std::vector<Tensor*> DmsmModel::parameters() {
  std::vector<Tensor*> p;
  for (auto* t : {&image_tower, &caption_tower}) {
    for (auto& l : t->layers) {
      p.push_back(&l.weights);
      p.push_back(&l.bias);
    }
  }
  return p;
}

std::vector<const Tensor*> DmsmModel::parameters() const {
  std::vector<const Tensor*> p;
  for (auto* t : {&image_tower, &caption_tower}) {
    for (const auto& l : t->layers) {
      p.push_back(&l.weights);
      p.push_back(&l.bias);
    }
  }
  return p;
}

DmsmModel init_model(std::size_t image_dim, TrigramInventory inventory, const DmsmConfig& config) {
  if (image_dim == 0 || inventory.size() == 0 || config.dim == 0 || config.hidden == 0) {
    throw InvalidArgument("dmsm: tower dimensions must be positive");
  }
  std::mt19937_64 rng(config.seed);
  DmsmModel m;
  m.config = config;
  m.inventory = std::move(inventory);
  m.input_mean = Tensor({image_dim}, 0.0);
  m.input_scale = Tensor({image_dim}, 1.0);
  m.image_tower = init_tower(rng, image_dim, config.hidden, config.dim);
  m.caption_tower = init_tower(rng, m.inventory.size(), config.hidden, config.dim);
  return m;
}

// --- embedding and scoring ------------------------------------------------------

Embedding normalize_embedding(std::span<const double> raw, Modality modality) {
  double sq = 0;
  for (double v : raw) sq += v * v;
  if (!(sq > 0) || !std::isfinite(sq)) {
    throw InvalidArgument("dmsm: degenerate embedding (zero vector)");
  }
  const double inv = 1.0 / std::sqrt(sq);
  Embedding e{{}, modality};
  e.values.reserve(raw.size());
  for (double v : raw) e.values.push_back(v * inv);
  return e;
}

Embedding embed_image(const DmsmModel& model, std::span<const double> vision_features) {
  Tensor x({1, vision_features.size()});
  std::copy(vision_features.begin(), vision_features.end(), x.data().begin());
  return normalized(model.image_tower.forward(standardize(model, x)), Modality::kImage);
}

Embedding embed_caption(const DmsmModel& model, std::span<const std::string> words) {
  if (words.empty()) throw InvalidArgument("dmsm: empty caption");
  const auto counts = model.inventory.featurize(words);
  if (std::all_of(counts.begin(), counts.end(), [](double c) { return c == 0; })) {
    throw InvalidArgument("dmsm: caption '" + text::join({words.begin(), words.end()}) +
                          "' has no known letter trigrams");
  }
  Tensor x({1, counts.size()});
  std::copy(counts.begin(), counts.end(), x.data().begin());
  return normalized(model.caption_tower.forward(x), Modality::kCaption);
}

Embedding embed_caption(const DmsmModel& model, std::string_view caption) {
  return embed_caption(model, text::tokenize(caption));
}

double dmsm_score(const Embedding& image, const Embedding& caption) {
  if (image.values.size() != caption.values.size()) {
    throw ShapeError("dmsm_score: dimension " + std::to_string(image.values.size()) + " vs " +
                     std::to_string(caption.values.size()));
  }
  double dot = 0;
  for (std::size_t i = 0; i < image.values.size(); ++i) dot += image.values[i] * caption.values[i];
  return dot;
}

// --- training -------------------------------------------------------------------

double ranking_loss(const DmsmModel& model, const RankingBatch& batch, double gamma,
                    std::vector<Tensor>* grads) {
  Graph g;
  std::vector<Graph::Node> leaves;
  for (const Tensor* p : model.parameters()) leaves.push_back(g.leaf(*p));
  auto tower = [&](Graph::Node x, std::size_t first, std::size_t count) {
    for (std::size_t l = 0; l < count; ++l) {
      x = g.tanh(g.affine(x, leaves[first + 2 * l], leaves[first + 2 * l + 1]));
    }
    return g.l2_normalize(x);
  };
  const std::size_t image_layers = model.image_tower.layers.size();
  const auto img = tower(g.leaf(standardize(model, batch.image_features)), 0, image_layers);
  const auto cap = tower(g.leaf(caption_matrix(model, batch.captions)), 2 * image_layers,
                         model.caption_tower.layers.size());
  const auto loss =
      g.ranking_softmax(img, cap, batch.positive, batch.negatives, static_cast<Scalar>(gamma));
  if (grads) {
    g.backward(loss);
    grads->clear();
    for (auto leaf : leaves) grads->push_back(g.grad(leaf));
  }
  return g.value(loss)[0];
}

DmsmModel train_dmsm(std::span<const DmsmPair> pairs, const DmsmConfig& config,
                     TrainingReport* report, const EpochCallback& on_epoch) {
  if (pairs.empty()) throw InvalidArgument("train_dmsm: empty corpus");
  if (config.negatives == 0) throw InvalidArgument("train_dmsm: need at least one negative");
  const std::size_t f = pairs[0].vision_features.size();
  std::vector<std::string> captions;
  for (const auto& p : pairs) {
    if (p.vision_features.size() != f) {
      throw ShapeError("train_dmsm: inconsistent vision feature sizes");
    }
    captions.push_back(text::join(text::tokenize(p.caption)));
  }
  const std::set<std::string> distinct(captions.begin(), captions.end());
  if (distinct.size() < config.negatives + 1) {
    throw InvalidArgument("train_dmsm: " + std::to_string(config.negatives) +
                          " negatives requested but only " + std::to_string(distinct.size() - 1) +
                          " distinct negative captions available");
  }

  DmsmModel model = init_model(f, TrigramInventory::build(captions), config);
  for (std::size_t c = 0; c < f; ++c) {
    double mean = 0, sq = 0;
    for (const auto& p : pairs) mean += p.vision_features[c];
    mean /= static_cast<double>(pairs.size());
    for (const auto& p : pairs) sq += (p.vision_features[c] - mean) * (p.vision_features[c] - mean);
    const double sd = std::sqrt(sq / static_cast<double>(pairs.size()));
    model.input_mean[c] = static_cast<Scalar>(mean);
    model.input_scale[c] = static_cast<Scalar>(sd > 1e-12 ? 1.0 / sd : 1.0);
  }

  std::mt19937_64 rng(rnd::splitmix64(config.seed ^ 0xD5D5));
  const std::size_t batch = std::max<std::size_t>(1, std::min(config.batch_size, pairs.size()));
  auto make_batches = [&](const std::vector<std::size_t>& order) {
    std::vector<RankingBatch> out;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t n = std::min(batch, order.size() - start);
      RankingBatch b;
      b.image_features = Tensor({n, f});
      for (std::size_t i = 0; i < n; ++i) {
        const auto& v = pairs[order[start + i]].vision_features;
        std::copy(v.begin(), v.end(), b.image_features.data().begin() + i * f);
        b.captions.push_back(captions[order[start + i]]);
        b.positive.push_back(i);
      }
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> pool;
        for (std::size_t j = 0; j < n; ++j) {
          if (b.captions[j] != b.captions[i]) pool.push_back(j);
        }
        std::vector<std::size_t> chosen;
        if (pool.size() >= config.negatives) {
          rnd::shuffle(pool, rng);
          chosen.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(config.negatives));
        } else {
          // Too few distinct captions in this batch: top up from the corpus.
          chosen = pool;
          std::set<std::string> used;
          for (auto j : chosen) used.insert(b.captions[j]);
          while (chosen.size() < config.negatives) {
            const auto& c = captions[rnd::index(rng, captions.size())];
            if (c == b.captions[i] || used.contains(c)) continue;
            used.insert(c);
            chosen.push_back(b.captions.size());
            b.captions.push_back(c);
          }
        }
        b.negatives.push_back(std::move(chosen));
      }
      out.push_back(std::move(b));
    }
    return out;
  };

  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  // The reported curve is the loss over one fixed set of batches, so epochs
  // are comparable; training batches are redrawn every epoch.
  const auto eval_batches = make_batches(order);
  auto eval_loss = [&] {
    double total = 0;
    for (const auto& b : eval_batches) total += ranking_loss(model, b, config.gamma);
    return total / static_cast<double>(eval_batches.size());
  };

  const std::size_t total_steps = eval_batches.size() * config.epochs;
  MomentumSgd opt(config.learning_rate, config.momentum, config.weight_decay);
  TrainingReport local;
  local.initial_loss = eval_loss();
  std::vector<Tensor> grads;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rnd::shuffle(order, rng);
    for (const auto& b : make_batches(order)) {
      const double progress = static_cast<double>(step++) / static_cast<double>(total_steps);
      opt.set_learning_rate(config.learning_rate * 0.5 *
                            (1.0 + std::cos(std::numbers::pi * progress)));
      ranking_loss(model, b, config.gamma, &grads);
      std::vector<const Tensor*> g;
      for (const auto& t : grads) g.push_back(&t);
      opt.step(model.parameters(), g);
    }
    local.epoch_loss.push_back(eval_loss());
    if (on_epoch) on_epoch(epoch, local.epoch_loss.back());
  }
  if (report) *report = std::move(local);
  return model;
}

double retrieval_accuracy(const DmsmModel& model, std::span<const DmsmPair> pairs,
                          std::size_t distractors, std::uint64_t seed) {
  if (pairs.empty()) throw InvalidArgument("retrieval_accuracy: empty set");
  std::vector<std::string> distinct;
  std::vector<std::size_t> caption_of;
  for (const auto& p : pairs) {
    const std::string c = text::join(text::tokenize(p.caption));
    auto it = std::find(distinct.begin(), distinct.end(), c);
    caption_of.push_back(static_cast<std::size_t>(it - distinct.begin()));
    if (it == distinct.end()) distinct.push_back(c);
  }
  if (distinct.size() < distractors + 1) {
    throw InvalidArgument("retrieval_accuracy: only " + std::to_string(distinct.size()) +
                          " distinct captions for " + std::to_string(distractors) +
                          " distractors");
  }
  const std::size_t f = model.image_input_dim();
  Tensor images({pairs.size(), f});
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].vision_features.size() != f) {
      throw ShapeError("retrieval_accuracy: vision feature size mismatch");
    }
    std::copy(pairs[i].vision_features.begin(), pairs[i].vision_features.end(),
              images.data().begin() + i * f);
  }
  const auto img = embed_rows(model.image_tower.forward(standardize(model, images)),
                              Modality::kImage);
  const auto cap = embed_rows(model.caption_tower.forward(caption_matrix(model, distinct)),
                              Modality::kCaption);
  std::mt19937_64 rng(seed);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double own = dmsm_score(img[i], cap[caption_of[i]]);
    std::set<std::size_t> drawn;
    bool hit = true;
    while (drawn.size() < distractors) {
      const std::size_t j = rnd::index(rng, distinct.size());
      if (j == caption_of[i] || !drawn.insert(j).second) continue;
      if (dmsm_score(img[i], cap[j]) >= own) hit = false;
    }
    hits += hit ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

std::vector<RankedCandidate> rank_candidates(const DmsmModel& model,
                                             std::span<const double> vision_features,
                                             std::span<const lm::CaptionCandidate> candidates) {
  if (candidates.empty()) throw InvalidArgument("rank_candidates: no candidates");
  const Embedding image = embed_image(model, vision_features);
  std::vector<RankedCandidate> out;
  for (const auto& c : candidates) {
    RankedCandidate r{c, 0.0, image, embed_caption(model, c.words)};
    r.dmsm_score = dmsm_score(r.image, r.caption);
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    return a.dmsm_score > b.dmsm_score;
  });
  return out;
}

// --- persistence ----------------------------------------------------------------

Checkpoint to_checkpoint(const DmsmModel& model) {
  Checkpoint ck;
  ck.metadata = {{"kind", "dmsm"},
                 {"config", config_json(model.config)},
                 {"trigrams", model.inventory.trigrams()},
                 {"image_layers", model.image_tower.layers.size()},
                 {"caption_layers", model.caption_tower.layers.size()}};
  ck.add("input.mean", model.input_mean);
  ck.add("input.scale", model.input_scale);
  auto add_tower = [&](const std::string& name, const Tower& t) {
    for (std::size_t i = 0; i < t.layers.size(); ++i) {
      ck.add(name + std::to_string(i) + ".weights", t.layers[i].weights);
      ck.add(name + std::to_string(i) + ".bias", t.layers[i].bias);
    }
  };
  add_tower("image", model.image_tower);
  add_tower("caption", model.caption_tower);
  return ck;
}

DmsmModel from_checkpoint(const Checkpoint& ck) {
  if (ck.metadata.value("kind", "") != "dmsm") throw FormatError("checkpoint is not a DMSM model");
  DmsmModel m;
  m.config = config_from_json(ck.metadata.at("config"));
  m.inventory = TrigramInventory(ck.metadata.at("trigrams").get<std::vector<std::string>>());
  m.input_mean = ck.get("input.mean");
  m.input_scale = ck.get("input.scale");
  auto load_tower = [&](const std::string& name, std::size_t count) {
    Tower t;
    for (std::size_t i = 0; i < count; ++i) {
      Layer l{ck.get(name + std::to_string(i) + ".weights"),
              ck.get(name + std::to_string(i) + ".bias")};
      if (l.weights.rank() != 2 || l.bias.shape() != Shape{l.weights.dim(1)} ||
          (i > 0 && t.layers.back().weights.dim(1) != l.weights.dim(0))) {
        throw FormatError("dmsm checkpoint: malformed " + name + " layer " + std::to_string(i));
      }
      t.layers.push_back(std::move(l));
    }
    return t;
  };
  m.image_tower = load_tower("image", ck.metadata.at("image_layers"));
  m.caption_tower = load_tower("caption", ck.metadata.at("caption_layers"));
  if (m.image_tower.output_dim() != m.caption_tower.output_dim() ||
      m.caption_tower.input_dim() != m.inventory.size() ||
      m.input_mean.shape() != Shape{m.image_tower.input_dim()} ||
      m.input_scale.shape() != m.input_mean.shape()) {
    throw FormatError("dmsm checkpoint: tower shapes disagree");
  }
  return m;
}

void save_model(const std::string& path, const DmsmModel& model) {
  save_checkpoint(path, to_checkpoint(model));
}

DmsmModel load_model(const std::string& path) { return from_checkpoint(load_checkpoint(path)); }

}  // namespace capforge::dmsm
