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

#include "capforge/synthetic.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "capforge/errors.hpp"
#include "capforge/random.hpp"
#include "capforge/text.hpp"

namespace capforge::synth {
namespace {

constexpr std::size_t kGridCells = 3;
constexpr std::size_t kCellSize = 10;
constexpr std::size_t kCellOrigin = 1;
// Minimum per-block spread for the corner region to count as a glyph.
constexpr double kGlyphContrast = 0.15;

using rnd::splitmix64;
using rnd::uniform01;
using rnd::uniform;
constexpr auto uniform_index = rnd::index;

struct Cell {
  std::size_t row, col;
};

// The top-left cell is reserved for the entity glyph.
std::vector<Cell> usable_cells() {
  std::vector<Cell> cells;
  for (std::size_t r = 0; r < kGridCells; ++r)
    for (std::size_t c = 0; c < kGridCells; ++c)
      if (r != 0 || c != 0) cells.push_back({r, c});
  return cells;
}

bool relation_holds(std::size_t relation, const Cell& a, const Cell& b) {
  switch (relation) {
    case 0: return a.row < b.row;                      // above
    case 1: return a.row > b.row;                      // below
    default: return a.row == b.row && a.col != b.col;  // beside
  }
}

constexpr std::array<std::array<double, 3>, 4> kPalette = {{
    {0.90, 0.10, 0.10},  // red
    {0.10, 0.80, 0.15},  // green
    {0.15, 0.20, 0.95},  // blue
    {0.92, 0.85, 0.10},  // yellow
}};

// Sylvester-Hadamard row `row` of order 16: (-1)^popcount(row & j).
int hadamard(std::size_t row, std::size_t j) {
  return (std::popcount(row & j) % 2 == 0) ? 1 : -1;
}

bool is_color(std::string_view w) {
  return std::find(kColors.begin(), kColors.end(), w) != kColors.end();
}
bool is_shape(std::string_view w) {
  return std::find(kShapes.begin(), kShapes.end(), w) != kShapes.end();
}

}  // namespace

std::vector<std::string> content_words() {
  std::vector<std::string> words;
  for (auto c : kColors) words.emplace_back(c);
  for (auto s : kShapes) words.emplace_back(s);
  words.emplace_back(kLandmarkTag);
  words.emplace_back(kCelebrityTag);
  return words;
}

SceneSpec sample_scene(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SceneSpec scene;
  scene.seed = seed;
  const double g = uniform01(rng);
  if (g < kCelebrityProb) {
    scene.glyph = uniform_index(rng, 4);
  } else if (g < kCelebrityProb + kLandmarkProb) {
    scene.glyph = 4 + uniform_index(rng, 4);
  }
  const double u = uniform01(rng);
  const std::size_t n = u < kObjectCountProbs[0]                         ? 1
                        : u < kObjectCountProbs[0] + kObjectCountProbs[1] ? 2
                                                                          : 3;
  scene.objects.resize(n);
  for (auto& obj : scene.objects) {
    obj.color = uniform_index(rng, kColors.size());
    obj.shape = uniform_index(rng, kShapes.size());
  }
  const auto cells = usable_cells();
  std::vector<Cell> chosen;
  if (n == 2) {
    scene.relation = uniform_index(rng, kRelations.size());
    std::vector<std::pair<Cell, Cell>> pairs;
    for (const auto& a : cells)
      for (const auto& b : cells)
        if (relation_holds(*scene.relation, a, b)) pairs.emplace_back(a, b);
    const auto& pick = pairs[uniform_index(rng, pairs.size())];
    chosen = {pick.first, pick.second};
  } else {
    auto pool = cells;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = i + uniform_index(rng, pool.size() - i);
      std::swap(pool[i], pool[k]);
      chosen.push_back(pool[i]);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    scene.objects[i].cell_row = chosen[i].row;
    scene.objects[i].cell_col = chosen[i].col;
  }
  return scene;
}

Tensor render(const SceneSpec& scene) {
  std::mt19937_64 rng(splitmix64(scene.seed ^ 0x5EEDF00DULL));
  constexpr std::size_t S = kImageSize;
  Tensor image({3, S, S});
  const double base = uniform(rng, 0.05, 0.25);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < S * S; ++i)
      image[c * S * S + i] = static_cast<Scalar>(base + uniform(rng, -0.04, 0.04));

  for (const auto& obj : scene.objects) {
    const double cy = static_cast<double>(kCellOrigin + obj.cell_row * kCellSize) +
                      kCellSize / 2.0 - 0.5 + uniform(rng, -0.8, 0.8);
    const double cx = static_cast<double>(kCellOrigin + obj.cell_col * kCellSize) +
                      kCellSize / 2.0 - 0.5 + uniform(rng, -0.8, 0.8);
    const double r = uniform(rng, 3.6, 4.5);
    std::array<double, 3> rgb = kPalette[obj.color];
    for (auto& v : rgb) v = std::clamp(v + uniform(rng, -0.06, 0.06), 0.0, 1.0);
    for (std::size_t y = 0; y < S; ++y) {
      for (std::size_t x = 0; x < S; ++x) {
        const double dy = static_cast<double>(y) - cy;
        const double dx = static_cast<double>(x) - cx;
        bool inside = false;
        switch (obj.shape) {
          case 0:
            inside = dx * dx + dy * dy <= r * r;
            break;
          case 1:
            inside = std::abs(dx) <= 0.85 * r && std::abs(dy) <= 0.85 * r;
            break;
          default: {
            // Apex up: half-width grows linearly from 0 at the top to r.
            const double t = (dy + r) / (2 * r);
            inside = t >= 0 && t <= 1 && std::abs(dx) <= r * t;
          }
        }
        if (!inside) continue;
        for (std::size_t c = 0; c < 3; ++c)
          image[(c * S + y) * S + x] = static_cast<Scalar>(rgb[c]);
      }
    }
  }

  if (scene.glyph) {
    const std::size_t g = *scene.glyph;
    constexpr std::size_t block = kGlyphSize / 4;
    for (std::size_t by = 0; by < 4; ++by)
      for (std::size_t bx = 0; bx < 4; ++bx) {
        const double level = hadamard(g + 1, by * 4 + bx) > 0 ? 0.95 : 0.05;
        for (std::size_t y = by * block; y < (by + 1) * block; ++y)
          for (std::size_t x = bx * block; x < (bx + 1) * block; ++x)
            for (std::size_t c = 0; c < 3; ++c)
              image[(c * S + y) * S + x] =
                  static_cast<Scalar>(level + uniform(rng, -0.03, 0.03));
      }
  }
  for (auto& v : image.data()) v = std::clamp(v, Scalar(0), Scalar(1));
  return image;
}

std::string caption_for(const SceneSpec& scene) {
  std::vector<std::string> words;
  if (scene.glyph) {
    if (glyph_kind(*scene.glyph) == EntityKind::kLandmark) {
      words = {"a", "photo", "of"};
    } else {
      words = {"a", "person", "with"};
    }
  }
  auto np = [&](const SceneObject& o) {
    words.emplace_back("a");
    words.emplace_back(kColors[o.color]);
    words.emplace_back(kShapes[o.shape]);
  };
  const auto& objs = scene.objects;
  np(objs[0]);
  if (objs.size() == 2) {
    words.emplace_back(kRelations[scene.relation.value_or(0)]);
    np(objs[1]);
  } else if (objs.size() == 3) {
    words.emplace_back("and");
    np(objs[1]);
    words.emplace_back("and");
    np(objs[2]);
  }
  return text::join(words);
}

std::vector<std::string> caption_tags(std::string_view caption) {
  const auto words = text::tokenize(caption);
  std::vector<std::string> tags;
  for (const auto& w : content_words()) {
    if (std::find(words.begin(), words.end(), w) != words.end()) tags.push_back(w);
  }
  return tags;
}

std::vector<std::string> tags_for(const SceneSpec& scene) {
  return caption_tags(caption_for(scene));
}

LabeledExample make_example(const SceneSpec& scene) {
  LabeledExample ex;
  ex.image = render(scene);
  ex.tags = tags_for(scene);
  ex.caption = caption_for(scene);
  ex.glyph = scene.glyph;
  if (scene.glyph) ex.entity_descriptor = entity_descriptor(*scene.glyph);
  return ex;
}

std::vector<LabeledExample> generate_corpus(std::uint64_t seed, std::size_t n,
                                            std::size_t offset) {
  if (n < 1) throw InvalidArgument("generate_corpus: n must be >= 1");
  std::vector<LabeledExample> corpus;
  corpus.reserve(n);
  for (std::size_t i = offset; i < offset + n; ++i) {
    corpus.push_back(make_example(sample_scene(splitmix64(seed * 0x100000001B3ULL + i))));
  }
  return corpus;
}

bool parses_under_grammar(std::string_view caption) {
  const auto w = text::tokenize(caption);
  std::size_t pos = 0;
  auto expect = [&](std::string_view word) {
    if (pos < w.size() && w[pos] == word) {
      ++pos;
      return true;
    }
    return false;
  };
  auto np = [&]() {
    if (!expect("a")) return false;
    if (pos >= w.size() || !is_color(w[pos])) return false;
    ++pos;
    if (pos >= w.size() || !is_shape(w[pos])) return false;
    ++pos;
    return true;
  };
  // Optional glyph prefix.
  if (w.size() >= 3 && w[0] == "a" && (w[1] == "photo" || w[1] == "person")) {
    if (w[1] == "photo" && w[2] != "of") return false;
    if (w[1] == "person" && w[2] != "with") return false;
    pos = 3;
  }
  if (!np()) return false;
  if (pos == w.size()) return true;
  if (std::find(kRelations.begin(), kRelations.end(), w[pos]) != kRelations.end()) {
    ++pos;
    return np() && pos == w.size();
  }
  if (!expect("and") || !np() || !expect("and") || !np()) return false;
  return pos == w.size();
}

std::string corrupt_caption(std::string_view caption, std::uint64_t seed,
                            SwapKind kind) {
  auto words = text::tokenize(caption);
  const auto present = caption_tags(caption);
  auto absent = [&](auto inventory) {
    std::vector<std::string> out;
    for (auto w : inventory) {
      if (std::find(present.begin(), present.end(), w) == present.end()) {
        out.emplace_back(w);
      }
    }
    return out;
  };
  const auto free_colors = absent(kColors);
  const auto free_shapes = absent(kShapes);
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const bool color_ok = kind != SwapKind::kShape && is_color(words[i]) && !free_colors.empty();
    const bool shape_ok = kind != SwapKind::kColor && is_shape(words[i]) && !free_shapes.empty();
    if (color_ok || shape_ok) positions.push_back(i);
  }
  if (positions.empty()) {
    throw InvalidArgument("corrupt_caption: no swappable word in '" +
                          std::string(caption) + "'");
  }
  std::mt19937_64 rng(splitmix64(seed));
  const std::size_t at = positions[uniform_index(rng, positions.size())];
  const auto& options = is_color(words[at]) ? free_colors : free_shapes;
  words[at] = options[uniform_index(rng, options.size())];
  return text::join(words);
}

EntityKind glyph_kind(std::size_t glyph) {
  if (glyph >= kGlyphCount) {
    throw InvalidArgument("unknown glyph id " + std::to_string(glyph));
  }
  return glyph < 4 ? EntityKind::kCelebrity : EntityKind::kLandmark;
}

std::string glyph_name(std::size_t glyph) {
  static const std::array<const char*, kGlyphCount> kNames = {
      "Ada Example",   "Ben Sample",    "Cleo Placeholder", "Dev Fixture",
      "Example Tower", "Sample Bridge", "Placeholder Gate", "Fixture Arch"};
  glyph_kind(glyph);
  return kNames[glyph];
}

std::vector<std::string> glyph_replace_words(std::size_t glyph) {
  if (glyph_kind(glyph) == EntityKind::kCelebrity) return {"person"};
  return {"building", "tower"};
}

std::vector<double> entity_descriptor(std::size_t glyph) {
  glyph_kind(glyph);
  std::vector<double> v(kDescriptorDim);
  for (std::size_t j = 0; j < kDescriptorDim; ++j) v[j] = hadamard(glyph + 1, j) / 4.0;
  return v;
}

std::optional<std::vector<double>> descriptor_from_image(const Tensor& image) {
  const Tensor* img = &image;
  Tensor squeezed;
  if (image.rank() == 4 && image.dim(0) == 1) {
    squeezed = image.reshaped({image.dim(1), image.dim(2), image.dim(3)});
    img = &squeezed;
  }
  if (img->rank() != 3 || img->dim(0) != 3 || img->dim(1) < kGlyphSize ||
      img->dim(2) < kGlyphSize) {
    return std::nullopt;
  }
  const std::size_t h = img->dim(1), w = img->dim(2);
  constexpr std::size_t block = kGlyphSize / 4;
  std::vector<double> v(kDescriptorDim, 0.0);
  for (std::size_t by = 0; by < 4; ++by)
    for (std::size_t bx = 0; bx < 4; ++bx) {
      double sum = 0;
      for (std::size_t y = by * block; y < (by + 1) * block; ++y)
        for (std::size_t x = bx * block; x < (bx + 1) * block; ++x)
          for (std::size_t c = 0; c < 3; ++c) sum += (*img)[(c * h + y) * w + x];
      v[by * 4 + bx] = sum / (3.0 * block * block);
    }
  double mean = 0;
  for (double x : v) mean += x;
  mean /= kDescriptorDim;
  double sq = 0;
  for (double& x : v) {
    x -= mean;
    sq += x * x;
  }
  if (std::sqrt(sq / kDescriptorDim) < kGlyphContrast) return std::nullopt;
  const double norm = std::sqrt(sq);
  for (double& x : v) x /= norm;
  return v;
}

std::string gallery_json() {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t g = 0; g < kGlyphCount; ++g) {
    entries.push_back({{"name", glyph_name(g)},
                       {"kind", glyph_kind(g) == EntityKind::kCelebrity ? "celebrity"
                                                                       : "landmark"},
                       {"embedding", entity_descriptor(g)},
                       {"replace_words", glyph_replace_words(g)}});
  }
  return entries.dump(2);
}

CaptionProcessStats caption_process_stats() {
  // Caption = prefix x ordered (color, shape) list x relation; cells and the
  // specific glyph id never reach the text, so they are summed out here.
  struct Prefix {
    std::vector<std::string> words;
    double prob;
  };
  const std::vector<Prefix> prefixes = {
      {{}, 1 - kCelebrityProb - kLandmarkProb},
      {{"a", "photo", "of"}, kLandmarkProb},
      {{"a", "person", "with"}, kCelebrityProb}};
  const double np_prob = 1.0 / static_cast<double>(kColors.size() * kShapes.size());

  std::map<std::vector<std::string>, double> tag_mass;
  CaptionProcessStats stats;
  auto emit = [&](const std::vector<std::string>& words, double p) {
    stats.caption_entropy -= p * std::log(p);
    stats.mean_tokens += p * static_cast<double>(words.size() + 1);
    tag_mass[caption_tags(text::join(words))] += p;
    ++stats.distinct_captions;
  };
  std::vector<std::pair<std::size_t, std::size_t>> nps;
  for (std::size_t c = 0; c < kColors.size(); ++c)
    for (std::size_t s = 0; s < kShapes.size(); ++s) nps.emplace_back(c, s);
  auto np_words = [&](std::vector<std::string>& w, std::pair<std::size_t, std::size_t> np) {
    w.emplace_back("a");
    w.emplace_back(kColors[np.first]);
    w.emplace_back(kShapes[np.second]);
  };
  for (const auto& prefix : prefixes) {
    for (const auto& a : nps) {
      auto w1 = prefix.words;
      np_words(w1, a);
      emit(w1, prefix.prob * kObjectCountProbs[0] * np_prob);
      for (const auto& b : nps) {
        for (auto rel : kRelations) {
          auto w2 = w1;
          w2.emplace_back(rel);
          np_words(w2, b);
          emit(w2, prefix.prob * kObjectCountProbs[1] * np_prob * np_prob /
                       static_cast<double>(kRelations.size()));
        }
        for (const auto& c : nps) {
          auto w3 = w1;
          w3.emplace_back("and");
          np_words(w3, b);
          w3.emplace_back("and");
          np_words(w3, c);
          emit(w3, prefix.prob * kObjectCountProbs[2] * np_prob * np_prob * np_prob);
        }
      }
    }
  }
  for (const auto& [tags, p] : tag_mass) stats.tag_entropy -= p * std::log(p);
  stats.conditional_entropy = stats.caption_entropy - stats.tag_entropy;
  stats.per_token_perplexity = std::exp(stats.conditional_entropy / stats.mean_tokens);
  return stats;
}

void export_corpus(const std::vector<LabeledExample>& corpus,
                   const std::string& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  std::ofstream index(fs::path(directory) / "index.tsv");
  if (!index) throw IoError("cannot write index in " + directory);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.cftn", i);
    save_tensor((fs::path(directory) / name).string(), corpus[i].image);
    index << name << '\t' << text::join(corpus[i].tags, ",") << '\t'
          << corpus[i].caption << '\t';
    if (corpus[i].glyph) index << *corpus[i].glyph;
    index << '\n';
  }
}

std::vector<LabeledExample> import_corpus(const std::string& directory) {
  namespace fs = std::filesystem;
  std::ifstream index(fs::path(directory) / "index.tsv");
  if (!index) throw IoError("no index.tsv in " + directory);
  std::vector<LabeledExample> corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(index, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = text::split(line, '\t');
    if (fields.size() != 4) {
      throw FormatError("index.tsv line " + std::to_string(line_no) +
                        ": expected 4 tab-separated fields");
    }
    LabeledExample ex;
    ex.image = load_tensor((fs::path(directory) / fields[0]).string());
    if (!fields[1].empty()) ex.tags = text::split(fields[1], ',');
    ex.caption = fields[2];
    if (!fields[3].empty()) {
      ex.glyph = static_cast<std::size_t>(std::stoul(fields[3]));
      ex.entity_descriptor = entity_descriptor(*ex.glyph);
    }
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

}  // namespace capforge::synth
