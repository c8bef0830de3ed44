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

#ifndef CAPFORGE_SYNTHETIC_HPP_
#define CAPFORGE_SYNTHETIC_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "capforge/tensor.hpp"

// Procedural scenes of colored shapes with template captions. Everything here
// is a pure function of its seed.
//
// Caption grammar (10 productions):
//   CAPTION -> SCENE
//   CAPTION -> "a photo of" SCENE            landmark glyph present
//   CAPTION -> "a person with" SCENE         celebrity glyph present
//   SCENE   -> NP
//   SCENE   -> NP REL NP
//   SCENE   -> NP "and" NP "and" NP
//   NP      -> "a" COLOR SHAPE
//   REL     -> "above" | "below" | "beside"
//   COLOR   -> "red" | "green" | "blue" | "yellow"
//   SHAPE   -> "circle" | "square" | "triangle"
namespace capforge::synth {

inline constexpr std::array<std::string_view, 4> kColors = {"red", "green",
                                                            "blue", "yellow"};
inline constexpr std::array<std::string_view, 3> kShapes = {"circle", "square",
                                                            "triangle"};
inline constexpr std::array<std::string_view, 3> kRelations = {"above", "below",
                                                               "beside"};
inline constexpr std::string_view kLandmarkTag = "photo";
inline constexpr std::string_view kCelebrityTag = "person";

inline constexpr std::size_t kImageSize = 32;
inline constexpr std::size_t kGlyphSize = 8;
inline constexpr std::size_t kGlyphCount = 8;  // 0-3 celebrities, 4-7 landmarks
inline constexpr std::size_t kDescriptorDim = 16;

// Scene sampling probabilities.
inline constexpr std::array<double, 3> kObjectCountProbs = {0.4, 0.4, 0.2};
inline constexpr double kCelebrityProb = 0.15;
inline constexpr double kLandmarkProb = 0.15;

// Every content word, in tag-vocabulary order.
std::vector<std::string> content_words();

enum class EntityKind { kCelebrity, kLandmark };

struct SceneObject {
  std::size_t color = 0;  // index into kColors
  std::size_t shape = 0;  // index into kShapes
  std::size_t cell_row = 0;
  std::size_t cell_col = 0;
};

struct SceneSpec {
  std::vector<SceneObject> objects;   // 1-3, caption order
  std::optional<std::size_t> relation;  // index into kRelations, two objects only
  std::optional<std::size_t> glyph;
  std::uint64_t seed = 0;
};

struct LabeledExample {
  Tensor image;                   // 3 x 32 x 32, values in [0, 1]
  std::vector<std::string> tags;  // sorted in content_words() order
  std::string caption;
  std::optional<std::size_t> glyph;
  std::optional<std::vector<double>> entity_descriptor;
};

SceneSpec sample_scene(std::uint64_t seed);
Tensor render(const SceneSpec& scene);
std::string caption_for(const SceneSpec& scene);
std::vector<std::string> tags_for(const SceneSpec& scene);
LabeledExample make_example(const SceneSpec& scene);

// Examples [offset, offset + n) of the stream for `seed`. Example i depends
// only on (seed, i), so disjoint ranges give disjoint train/test splits.
std::vector<LabeledExample> generate_corpus(std::uint64_t seed, std::size_t n,
                                            std::size_t offset = 0);

bool parses_under_grammar(std::string_view caption);

// Tag words appearing in a caption, in content_words() order.
std::vector<std::string> caption_tags(std::string_view caption);

enum class SwapKind { kAny, kColor, kShape };

// Replaces one color or shape word by an inventory member absent from the
// caption, so the corrupted caption's tag set always differs.
std::string corrupt_caption(std::string_view caption, std::uint64_t seed,
                            SwapKind kind = SwapKind::kAny);

// --- entity glyphs ----------------------------------------------------------

EntityKind glyph_kind(std::size_t glyph);
std::string glyph_name(std::size_t glyph);
std::vector<std::string> glyph_replace_words(std::size_t glyph);
// Unit vector in R^16 for the glyph's block pattern.
std::vector<double> entity_descriptor(std::size_t glyph);
// Block statistics of the top-left glyph region, centered and normalized.
// Empty when the region is too flat to carry a glyph.
std::optional<std::vector<double>> descriptor_from_image(const Tensor& image);
// Gallery file (JSON array) for all glyphs.
std::string gallery_json();

// --- caption process statistics -------------------------------------------

// Exact statistics of the caption generator, obtained by enumerating every
// caption it can emit. Token counts include the end marker.
struct CaptionProcessStats {
  double caption_entropy = 0;          // H(C), nats
  double tag_entropy = 0;              // H(T), nats
  double conditional_entropy = 0;      // H(C | T)
  double mean_tokens = 0;
  double per_token_perplexity = 0;     // exp(H(C|T) / mean_tokens)
  std::size_t distinct_captions = 0;
};
CaptionProcessStats caption_process_stats();

// --- corpus export ----------------------------------------------------------

// Writes NNNNNN.cftn images plus index.tsv with lines
//   file \t tag,tag,... \t caption \t glyph-id-or-empty
void export_corpus(const std::vector<LabeledExample>& corpus,
                   const std::string& directory);
std::vector<LabeledExample> import_corpus(const std::string& directory);

}  // namespace capforge::synth

#endif  // CAPFORGE_SYNTHETIC_HPP_
