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

#include "capforge/vision.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

#include "capforge/errors.hpp"
#include "capforge/graph.hpp"
#include "capforge/optim.hpp"
#include "capforge/random.hpp"
#include "capforge/synthetic.hpp"
#include "capforge/text.hpp"

namespace capforge::vision {
namespace {

using ops::BatchNormParams;
using ops::ConvParams;

std::size_t conv_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                        std::size_t padding) {
  if (in + 2 * padding < kernel) return 0;
  return (in + 2 * padding - kernel) / stride + 1;
}

ConvParams he_conv(std::mt19937_64& rng, std::size_t out, std::size_t in,
                   std::size_t kernel, std::size_t stride, std::size_t padding) {
  ConvParams p{Tensor({out, in, kernel, kernel}), Tensor({out}, 0.0), stride, padding};
  const double stddev = std::sqrt(2.0 / static_cast<double>(in * kernel * kernel));
  for (auto& w : p.weights.data()) w = static_cast<Scalar>(rnd::normal(rng, 0, stddev));
  return p;
}

Tensor as_batch(const Tensor& image) {
  if (image.rank() == 3) return image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)});
  if (image.rank() == 4) return image;
  throw ShapeError("vision: expected a 3 x H x W image, got " + shape_str(image.shape()));
}

void check_input(const VisionNet& net, const Tensor& batch) {
  if (batch.rank() != 4 || batch.dim(1) != 3) {
    throw ShapeError("vision: expected N x 3 x H x W input, got " + shape_str(batch.shape()));
  }
  const std::size_t min_side = minimum_input_size(net.config);
  if (batch.dim(2) < min_side || batch.dim(3) < min_side) {
    throw InvalidArgument("vision: image " + std::to_string(batch.dim(2)) + "x" +
                          std::to_string(batch.dim(3)) + " is smaller than the minimum " +
                          std::to_string(min_side) + "x" + std::to_string(min_side));
  }
}

Tensor stack(std::span<const Tensor> images, std::span<const std::size_t> order) {
  const Shape& s = images[order[0]].shape();
  const std::size_t per = shape_numel(s);
  Tensor batch({order.size(), s[0], s[1], s[2]});
  Scalar* dst = batch.ptr();
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Tensor& img = images[order[i]];
    if (img.shape() != s) {
      throw ShapeError("vision: batch mixes image shapes " + shape_str(s) + " and " +
                       shape_str(img.shape()));
    }
    std::copy(img.data().begin(), img.data().end(), dst + i * per);
  }
  return batch;
}

// Records the forward pass on a Graph, with every parameter as a leaf.
class TrainingForward {
 public:
  TrainingForward(Graph& graph, VisionNet& net) : g_(graph), net_(net) {
    for (Tensor* p : net.parameters()) {
      leaves_.push_back(g_.leaf(*p));
      index_[p] = leaves_.back();
    }
  }

  Graph::Node logits(const Tensor& batch) {
    Graph::Node h = g_.leaf(batch);
    h = conv_bn(h, net_.stem, net_.stem_bn);
    h = g_.relu(h);
    for (auto& unit : net_.units) {
      Graph::Node a = g_.relu(conv_bn(h, unit.conv1, unit.bn1));
      a = conv_bn(a, unit.conv2, unit.bn2);
      const Graph::Node shortcut =
          unit.projection ? conv(h, *unit.projection) : h;
      h = g_.relu(g_.add(a, shortcut));
    }
    const Graph::Node pooled = g_.global_avg_pool(h);
    return g_.affine(pooled, param(net_.head_weights), param(net_.head_bias));
  }

  std::vector<const Tensor*> grads() const {
    std::vector<const Tensor*> out;
    for (Graph::Node n : leaves_) out.push_back(&g_.grad(n));
    return out;
  }

 private:
  Graph::Node param(Tensor& t) { return index_.at(&t); }
  Graph::Node conv(Graph::Node x, ConvParams& c) {
    return g_.conv2d(x, param(c.weights), param(c.bias), c.stride, c.padding);
  }
  Graph::Node conv_bn(Graph::Node x, ConvParams& c, BatchNormParams& bn) {
    return g_.batch_norm(conv(x, c), param(bn.gamma), param(bn.beta), bn,
                         ops::Mode::kTrain);
  }

  Graph& g_;
  VisionNet& net_;
  std::vector<Graph::Node> leaves_;
  std::unordered_map<const Tensor*, Graph::Node> index_;
};

nlohmann::json config_json(const NetworkConfig& c) {
  nlohmann::json units = nlohmann::json::array();
  for (const auto& u : c.units) units.push_back({u.channels, u.stride});
  return {{"stem_channels", c.stem_channels}, {"stem_kernel", c.stem_kernel},
          {"stem_stride", c.stem_stride},     {"stem_padding", c.stem_padding},
          {"units", units},                   {"image_size", c.image_size},
          {"seed", c.seed}};
}

NetworkConfig config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.stem_channels = j.at("stem_channels").get<std::size_t>();
  c.stem_kernel = j.at("stem_kernel").get<std::size_t>();
  c.stem_stride = j.at("stem_stride").get<std::size_t>();
  c.stem_padding = j.at("stem_padding").get<std::size_t>();
  c.units.clear();
  for (const auto& u : j.at("units")) {
    c.units.push_back({u.at(0).get<std::size_t>(), u.at(1).get<std::size_t>()});
  }
  c.image_size = j.at("image_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void add_conv(Checkpoint& ck, const std::string& prefix, const ConvParams& c) {
  ck.add(prefix + ".weights", c.weights);
  ck.add(prefix + ".bias", c.bias);
}

void add_bn(Checkpoint& ck, const std::string& prefix, const BatchNormParams& bn) {
  ck.add(prefix + ".gamma", bn.gamma);
  ck.add(prefix + ".beta", bn.beta);
  ck.add(prefix + ".running_mean", bn.running_mean);
  ck.add(prefix + ".running_var", bn.running_var);
}

void load_conv(const Checkpoint& ck, const std::string& prefix, ConvParams& c) {
  const Tensor& w = ck.get(prefix + ".weights");
  if (w.shape() != c.weights.shape()) {
    throw FormatError("vision checkpoint: " + prefix + ".weights has shape " +
                      shape_str(w.shape()) + ", config implies " +
                      shape_str(c.weights.shape()));
  }
  c.weights = w;
  c.bias = ck.get(prefix + ".bias");
}

void load_bn(const Checkpoint& ck, const std::string& prefix, BatchNormParams& bn) {
  bn.gamma = ck.get(prefix + ".gamma");
  bn.beta = ck.get(prefix + ".beta");
  bn.running_mean = ck.get(prefix + ".running_mean");
  bn.running_var = ck.get(prefix + ".running_var");
}

}  // namespace

// --- vocabulary ---------------------------------------------------------------

std::string_view source_name(VocabularySource source) {
  return source == VocabularySource::kCocoStyle ? "coco-style" : "web-style";
}

VocabularySource parse_source(std::string_view name) {
  if (name == "coco-style") return VocabularySource::kCocoStyle;
  if (name == "web-style") return VocabularySource::kWebStyle;
  throw InvalidArgument("unknown vocabulary source '" + std::string(name) + "'");
}

TagVocabulary::TagVocabulary(std::vector<std::string> tags, VocabularySource source)
    : source_(source) {
  std::set<std::string> seen;
  for (auto& t : tags) {
    std::string tag = text::lowercase(t);
    if (tag.empty()) throw InvalidArgument("tag vocabulary: empty tag");
    if (!seen.insert(tag).second) {
      throw InvalidArgument("tag vocabulary: duplicate tag '" + tag + "'");
    }
    tags_.push_back(std::move(tag));
  }
}

TagVocabulary TagVocabulary::coco_style() {
  std::vector<std::string> tags;
  for (auto c : synth::kColors) tags.emplace_back(c);
  for (auto s : synth::kShapes) tags.emplace_back(s);
  return TagVocabulary(std::move(tags), VocabularySource::kCocoStyle);
}

TagVocabulary TagVocabulary::web_style() {
  std::vector<std::string> tags;
  for (auto s : synth::kShapes) tags.emplace_back(s);
  tags.emplace_back(synth::kLandmarkTag);
  tags.emplace_back(synth::kCelebrityTag);
  return TagVocabulary(std::move(tags), VocabularySource::kWebStyle);
}

std::optional<std::size_t> TagVocabulary::index_of(std::string_view tag) const {
  const auto it = std::find(tags_.begin(), tags_.end(), tag);
  if (it == tags_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - tags_.begin());
}

void TagVocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary " + path);
  for (const auto& t : tags_) out << t << '\n';
}

TagVocabulary TagVocabulary::load(const std::string& path, VocabularySource source) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary " + path);
  std::vector<std::string> tags;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tags.push_back(line);
  }
  return TagVocabulary(std::move(tags), source);
}

// --- network ------------------------------------------------------------------

Tensor residual_unit_forward(const Tensor& x, const ResidualUnit& unit) {
  if (x.rank() != 4 || x.dim(1) != unit.in_channels()) {
    throw ShapeError("residual unit: input " + shape_str(x.shape()) + " but unit expects " +
                     std::to_string(unit.in_channels()) + " channels");
  }
  Tensor a = ops::relu(ops::batch_norm_infer(ops::conv2d(x, unit.conv1), unit.bn1));
  a = ops::batch_norm_infer(ops::conv2d(a, unit.conv2), unit.bn2);
  const Tensor shortcut = unit.projection ? ops::conv2d(x, *unit.projection) : x;
  if (shortcut.shape() != a.shape()) {
    throw ShapeError("residual unit: shortcut " + shape_str(shortcut.shape()) +
                     " does not match residual branch " + shape_str(a.shape()));
  }
  return ops::relu(ops::add(a, shortcut));
}

std::vector<Tensor*> VisionNet::parameters() {
  std::vector<Tensor*> p = {&stem.weights, &stem.bias, &stem_bn.gamma, &stem_bn.beta};
  for (auto& u : units) {
    for (Tensor* t : {&u.conv1.weights, &u.conv1.bias, &u.bn1.gamma, &u.bn1.beta,
                      &u.conv2.weights, &u.conv2.bias, &u.bn2.gamma, &u.bn2.beta}) {
      p.push_back(t);
    }
    if (u.projection) {
      p.push_back(&u.projection->weights);
      p.push_back(&u.projection->bias);
    }
  }
  p.push_back(&head_weights);
  p.push_back(&head_bias);
  return p;
}

std::size_t minimum_input_size(const NetworkConfig& config) {
  auto final_extent = [&](std::size_t side) {
    std::size_t e = conv_extent(side, config.stem_kernel, config.stem_stride,
                                config.stem_padding);
    for (const auto& u : config.units) {
      if (e == 0) return e;
      e = conv_extent(e, 3, u.stride, 1);
    }
    return e;
  };
  for (std::size_t side = 1; side <= 1u << 16; ++side) {
    if (final_extent(side) >= 1) return side;
  }
  throw InvalidArgument("vision: configuration admits no input size");
}

VisionNet build_network(const NetworkConfig& config, TagVocabulary vocabulary) {
  if (vocabulary.size() == 0) throw InvalidArgument("build_network: empty vocabulary");
  if (config.stem_channels == 0 || config.stem_kernel == 0 || config.stem_stride == 0) {
    throw InvalidArgument("build_network: stem channels, kernel and stride must be positive");
  }
  std::size_t extent = conv_extent(config.image_size, config.stem_kernel,
                                   config.stem_stride, config.stem_padding);
  if (extent == 0) {
    throw InvalidArgument("build_network: stem leaves no spatial extent at " +
                          std::to_string(config.image_size) + "x" +
                          std::to_string(config.image_size));
  }
  for (std::size_t i = 0; i < config.units.size(); ++i) {
    const auto& u = config.units[i];
    if (u.channels == 0 || u.stride == 0) {
      throw InvalidArgument("build_network: unit " + std::to_string(i) +
                            " needs positive channels and stride");
    }
    extent = conv_extent(extent, 3, u.stride, 1);
    if (extent == 0) {
      throw InvalidArgument("build_network: unit " + std::to_string(i) +
                            " leaves no spatial extent");
    }
  }

  std::mt19937_64 rng(rnd::splitmix64(config.seed));
  VisionNet net;
  net.config = config;
  net.vocabulary = std::move(vocabulary);
  net.stem = he_conv(rng, config.stem_channels, 3, config.stem_kernel, config.stem_stride,
                     config.stem_padding);
  net.stem_bn = BatchNormParams::identity(config.stem_channels);
  std::size_t channels = config.stem_channels;
  for (const auto& spec : config.units) {
    ResidualUnit u;
    u.conv1 = he_conv(rng, spec.channels, channels, 3, spec.stride, 1);
    u.bn1 = BatchNormParams::identity(spec.channels);
    u.conv2 = he_conv(rng, spec.channels, spec.channels, 3, 1, 1);
    u.bn2 = BatchNormParams::identity(spec.channels);
    if (spec.channels != channels || spec.stride != 1) {
      u.projection = he_conv(rng, spec.channels, channels, 1, spec.stride, 0);
    }
    net.units.push_back(std::move(u));
    channels = spec.channels;
  }
  const std::size_t v = net.vocabulary.size();
  net.head_weights = Tensor({channels, v});
  const double head_std = 1.0 / std::sqrt(static_cast<double>(channels));
  for (auto& w : net.head_weights.data()) {
    w = static_cast<Scalar>(rnd::normal(rng, 0, head_std));
  }
  net.head_bias = Tensor({v}, 0.0);
  return net;
}

Tensor feature_map(const VisionNet& net, const Tensor& images) {
  check_input(net, images);
  Tensor h = ops::relu(ops::batch_norm_infer(ops::conv2d(images, net.stem), net.stem_bn));
  for (const auto& unit : net.units) h = residual_unit_forward(h, unit);
  return h;
}

Tensor pooled_features(const VisionNet& net, const Tensor& images) {
  return ops::global_avg_pool(feature_map(net, images));
}

Tensor detect_batch(const VisionNet& net, const Tensor& images) {
  return ops::sigmoid(
      ops::affine(pooled_features(net, images), net.head_weights, net.head_bias));
}

std::optional<double> ConceptDetections::score(std::string_view tag) const {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == tag) return scores[i];
  }
  return std::nullopt;
}

std::vector<std::string> ConceptDetections::above(double threshold) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (scores[i] >= threshold) out.push_back(tags[i]);
  }
  return out;
}

ConceptDetections detect_concepts(const VisionNet& net, const Tensor& image) {
  const Tensor batch = as_batch(image);
  if (batch.dim(0) != 1) {
    throw ShapeError("detect_concepts: expected a single image, got " +
                     shape_str(image.shape()));
  }
  const Tensor probs = detect_batch(net, batch);
  ConceptDetections d;
  d.tags = net.vocabulary.tags();
  d.scores.assign(probs.data().begin(), probs.data().end());
  return d;
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3) {
    throw ShapeError("resize_bilinear: expected C x H x W, got " + shape_str(image.shape()));
  }
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out({c, height, width});
  auto source = [](std::size_t dst, std::size_t in, std::size_t out_n) {
    const double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) /
                         static_cast<double>(out_n) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };
  for (std::size_t y = 0; y < height; ++y) {
    const double sy = source(y, h, height);
    const auto y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double sx = source(x, w, width);
      const auto x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        auto px = [&](std::size_t yy, std::size_t xx) {
          return static_cast<double>(image[(ch * h + yy) * w + xx]);
        };
        double v = px(y0, x0);
        if (fx != 0 || fy != 0) {
          v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x1)) +
              fy * ((1 - fx) * px(y1, x0) + fx * px(y1, x1));
        }
        out[(ch * height + y) * width + x] = static_cast<Scalar>(v);
      }
    }
  }
  return out;
}

ConceptDetections classify_resized(const VisionNet& net, const Tensor& image) {
  if (image.rank() != 3) {
    throw ShapeError("classify_resized: expected C x H x W, got " + shape_str(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2), side = std::min(h, w);
  const std::size_t top = (h - side) / 2, left = (w - side) / 2;
  Tensor crop({image.dim(0), side, side});
  for (std::size_t c = 0; c < image.dim(0); ++c)
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x)
        crop[(c * side + y) * side + x] = image[(c * h + top + y) * w + left + x];
  const std::size_t s = net.config.image_size;
  return detect_concepts(net, side == s ? crop : resize_bilinear(crop, s, s));
}

ConceptDetections dual_detector(const ConceptDetections& a, const ConceptDetections& b) {
  ConceptDetections merged = a;
  for (std::size_t i = 0; i < b.tags.size(); ++i) {
    const auto it = std::find(merged.tags.begin(), merged.tags.end(), b.tags[i]);
    if (it == merged.tags.end()) {
      merged.tags.push_back(b.tags[i]);
      merged.scores.push_back(b.scores[i]);
    } else {
      double& s = merged.scores[static_cast<std::size_t>(it - merged.tags.begin())];
      s = std::max(s, b.scores[i]);
    }
  }
  return merged;
}

// --- training -----------------------------------------------------------------

Tensor encode_targets(const TagVocabulary& vocab,
                      std::span<const std::vector<std::string>> tags) {
  Tensor targets({tags.size(), vocab.size()}, 0.0);
  for (std::size_t i = 0; i < tags.size(); ++i) {
    for (const auto& t : tags[i]) {
      const auto k = vocab.index_of(t);
      if (!k) {
        throw InvalidArgument("example " + std::to_string(i) + " has tag '" + t +
                              "' outside the vocabulary");
      }
      targets[i * vocab.size() + *k] = 1.0;
    }
  }
  return targets;
}

TrainingReport train_multilabel(VisionNet& net, std::span<const Tensor> images,
                                std::span<const std::vector<std::string>> tags,
                                const TrainConfig& config, const EpochCallback& on_epoch) {
  if (images.empty()) throw InvalidArgument("train_multilabel: empty dataset");
  if (images.size() != tags.size()) {
    throw InvalidArgument("train_multilabel: " + std::to_string(images.size()) +
                          " images but " + std::to_string(tags.size()) + " tag sets");
  }
  if (config.batch_size == 0) throw InvalidArgument("train_multilabel: batch size 0");
  const Tensor all_targets = encode_targets(net.vocabulary, tags);
  const std::size_t v = net.vocabulary.size();

  std::mt19937_64 rng(rnd::splitmix64(config.seed));
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch_size = std::min(config.batch_size, images.size());
  const std::size_t steps_per_epoch =
      std::max((images.size() + batch_size - 1) / batch_size, config.min_steps_per_epoch);
  const double total_steps = static_cast<double>(steps_per_epoch * config.epochs);
  MomentumSgd optimizer(config.learning_rate, config.momentum, config.weight_decay);
  const std::vector<Tensor*> params = net.parameters();

  TrainingReport report;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::size_t cursor = order.size();
    double loss_sum = 0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      if (cursor == order.size()) {
        rnd::shuffle(order, rng);
        cursor = 0;
      }
      const std::size_t count = std::min(batch_size, order.size() - cursor);
      const std::span<const std::size_t> idx(order.data() + cursor, count);
      cursor += count;
      const Tensor batch = stack(images, idx);
      Tensor targets({idx.size(), v});
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t k = 0; k < v; ++k) targets[i * v + k] = all_targets[idx[i] * v + k];

      Graph g;
      TrainingForward forward(g, net);
      const Graph::Node loss = g.bce_with_logits(forward.logits(batch), std::move(targets));
      g.backward(loss);
      loss_sum += g.value(loss)[0];

      const double progress = static_cast<double>(step++) / total_steps;
      optimizer.set_learning_rate(config.learning_rate * 0.5 *
                                  (1 + std::cos(std::numbers::pi * progress)));
      const auto grads = forward.grads();
      optimizer.step(params, grads);
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(steps_per_epoch));
    if (on_epoch) on_epoch(epoch, report.epoch_loss.back());
  }
  return report;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw InvalidArgument("auc: " + std::to_string(scores.size()) + " scores but " +
                          std::to_string(labels.size()) + " labels");
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0;
  double positives = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double rank = (static_cast<double>(i + j) + 1) / 2;  // mean of i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) {
        positive_rank_sum += rank;
        positives += 1;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(scores.size()) - positives;
  if (positives == 0 || negatives == 0) {
    throw InvalidArgument("auc: needs at least one positive and one negative");
  }
  return (positive_rank_sum - positives * (positives + 1) / 2) / (positives * negatives);
}

AucReport evaluate_auc(const VisionNet& net, std::span<const Tensor> images,
                       std::span<const std::vector<std::string>> tags) {
  const Tensor targets = encode_targets(net.vocabulary, tags);
  const std::size_t v = net.vocabulary.size();
  std::vector<std::vector<double>> scores(v);
  constexpr std::size_t kChunk = 64;
  for (std::size_t begin = 0; begin < images.size(); begin += kChunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < std::min(begin + kChunk, images.size()); ++i) {
      idx.push_back(i);
    }
    const Tensor probs = detect_batch(net, stack(images, idx));
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t k = 0; k < v; ++k) scores[k].push_back(probs[i * v + k]);
  }
  AucReport report;
  for (std::size_t k = 0; k < v; ++k) {
    std::vector<int> labels(images.size());
    int pos = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      labels[i] = targets[i * v + k] > 0.5 ? 1 : 0;
      pos += labels[i];
    }
    if (pos == 0 || pos == static_cast<int>(images.size())) continue;
    report.tags.push_back(net.vocabulary.at(k));
    report.per_tag.push_back(auc(scores[k], labels));
  }
  if (report.per_tag.empty()) {
    throw InvalidArgument("evaluate_auc: no tag has both positives and negatives");
  }
  report.mean = std::accumulate(report.per_tag.begin(), report.per_tag.end(), 0.0) /
                static_cast<double>(report.per_tag.size());
  return report;
}

// --- checkpoints ----------------------------------------------------------------

Checkpoint to_checkpoint(const VisionNet& net) {
  Checkpoint ck;
  ck.metadata = {{"kind", "vision"},
                 {"config", config_json(net.config)},
                 {"vocabulary", net.vocabulary.tags()},
                 {"source", source_name(net.vocabulary.source())}};
  add_conv(ck, "stem", net.stem);
  add_bn(ck, "stem_bn", net.stem_bn);
  for (std::size_t i = 0; i < net.units.size(); ++i) {
    const auto& u = net.units[i];
    const std::string p = "unit" + std::to_string(i);
    add_conv(ck, p + ".conv1", u.conv1);
    add_bn(ck, p + ".bn1", u.bn1);
    add_conv(ck, p + ".conv2", u.conv2);
    add_bn(ck, p + ".bn2", u.bn2);
    if (u.projection) add_conv(ck, p + ".projection", *u.projection);
  }
  ck.add("head.weights", net.head_weights);
  ck.add("head.bias", net.head_bias);
  return ck;
}

VisionNet from_checkpoint(const Checkpoint& ck) {
  if (ck.metadata.value("kind", "") != "vision") {
    throw FormatError("checkpoint is not a vision network");
  }
  TagVocabulary vocab(ck.metadata.at("vocabulary").get<std::vector<std::string>>(),
                      parse_source(ck.metadata.at("source").get<std::string>()));
  VisionNet net = build_network(config_from_json(ck.metadata.at("config")), std::move(vocab));
  load_conv(ck, "stem", net.stem);
  load_bn(ck, "stem_bn", net.stem_bn);
  for (std::size_t i = 0; i < net.units.size(); ++i) {
    auto& u = net.units[i];
    const std::string p = "unit" + std::to_string(i);
    load_conv(ck, p + ".conv1", u.conv1);
    load_bn(ck, p + ".bn1", u.bn1);
    load_conv(ck, p + ".conv2", u.conv2);
    load_bn(ck, p + ".bn2", u.bn2);
    if (u.projection) load_conv(ck, p + ".projection", *u.projection);
  }
  net.head_weights = ck.get("head.weights");
  net.head_bias = ck.get("head.bias");
  if (net.head_weights.shape() != Shape{net.units.empty() ? net.config.stem_channels
                                                           : net.units.back().out_channels(),
                                        net.vocabulary.size()}) {
    throw FormatError("vision checkpoint: head shape " + shape_str(net.head_weights.shape()) +
                      " disagrees with config and vocabulary");
  }
  return net;
}

void save_network(const std::string& path, const VisionNet& net) {
  save_checkpoint(path, to_checkpoint(net));
}

VisionNet load_network(const std::string& path) {
  return from_checkpoint(load_checkpoint(path));
}

}  // namespace capforge::vision
