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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "capforge/errors.hpp"
#include "capforge/text.hpp"

namespace capforge::synth {
namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

TEST(Corpus, SameSeedIsBitIdentical) {
  const auto a = generate_corpus(7, 50);
  const auto b = generate_corpus(7, 50);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].tags, b[i].tags);
    EXPECT_EQ(a[i].caption, b[i].caption);
    EXPECT_EQ(a[i].glyph, b[i].glyph);
  }
}

TEST(Corpus, OffsetSelectsSameStream) {
  const auto whole = generate_corpus(3, 20);
  const auto tail = generate_corpus(3, 5, 15);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(whole[15 + i].caption, tail[i].caption);
    EXPECT_EQ(whole[15 + i].image, tail[i].image);
  }
}

TEST(Corpus, DifferentSeedsDiffer) {
  const auto a = generate_corpus(1, 10);
  const auto b = generate_corpus(2, 10);
  std::size_t same = 0;
  for (std::size_t i = 0; i < 10; ++i) same += a[i].image == b[i].image;
  EXPECT_EQ(same, 0u);
}

TEST(Corpus, SingleExampleParses) {
  const auto c = generate_corpus(7, 1);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_TRUE(parses_under_grammar(c[0].caption)) << c[0].caption;
}

TEST(Corpus, ZeroExamplesRejected) {
  EXPECT_THROW(generate_corpus(7, 0), InvalidArgument);
}

TEST(Corpus, TagMarginalsSeed7) {
  const std::size_t n = 10000;
  const auto corpus = generate_corpus(7, n);
  std::map<std::string, std::size_t> counts;
  for (const auto& ex : corpus)
    for (const auto& t : ex.tags) ++counts[t];
  for (const auto& word : content_words()) {
    const double f = static_cast<double>(counts[word]) / n;
    EXPECT_GE(f, 0.1) << word;
    EXPECT_LE(f, 0.6) << word;
  }
}

TEST(Corpus, PropertiesHoldOverManyExamples) {
  const auto corpus = generate_corpus(11, 400);
  for (const auto& ex : corpus) {
    ASSERT_EQ(ex.image.shape(), (Shape{3, 32, 32}));
    for (auto v : ex.image.data()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
    EXPECT_TRUE(parses_under_grammar(ex.caption)) << ex.caption;
    const auto words = text::tokenize(ex.caption);
    for (const auto& t : ex.tags) {
      EXPECT_NE(std::find(words.begin(), words.end(), t), words.end())
          << t << " missing from " << ex.caption;
    }
    EXPECT_EQ(ex.glyph.has_value(), ex.entity_descriptor.has_value());
  }
}

TEST(Scene, TagsAreExactlyThePresentInventory) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto scene = sample_scene(seed);
    std::set<std::string> expected;
    for (const auto& o : scene.objects) {
      expected.emplace(kColors[o.color]);
      expected.emplace(kShapes[o.shape]);
    }
    if (scene.glyph) {
      expected.emplace(glyph_kind(*scene.glyph) == EntityKind::kLandmark ? kLandmarkTag
                                                                         : kCelebrityTag);
    }
    const auto tags = tags_for(scene);
    EXPECT_EQ(std::set<std::string>(tags.begin(), tags.end()), expected);
  }
}

TEST(Scene, CellsDistinctAndRelationConsistent) {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const auto s = sample_scene(seed);
    ASSERT_GE(s.objects.size(), 1u);
    ASSERT_LE(s.objects.size(), 3u);
    std::set<std::pair<std::size_t, std::size_t>> cells;
    for (const auto& o : s.objects) {
      EXPECT_FALSE(o.cell_row == 0 && o.cell_col == 0);
      cells.emplace(o.cell_row, o.cell_col);
    }
    EXPECT_EQ(cells.size(), s.objects.size());
    EXPECT_EQ(s.relation.has_value(), s.objects.size() == 2);
    if (s.relation) {
      const auto& a = s.objects[0];
      const auto& b = s.objects[1];
      switch (*s.relation) {
        case 0: EXPECT_LT(a.cell_row, b.cell_row); break;
        case 1: EXPECT_GT(a.cell_row, b.cell_row); break;
        default: EXPECT_EQ(a.cell_row, b.cell_row);
      }
    }
  }
}

TEST(Render, EachShapeCoversAtLeast16Pixels) {
  for (std::size_t shape = 0; shape < kShapes.size(); ++shape) {
    for (std::size_t color = 0; color < kColors.size(); ++color) {
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SceneSpec s;
        s.seed = seed;
        s.objects = {{color, shape, 1, 1}};
        const Tensor img = render(s);
        // Background is gray; shape pixels have one channel far from the others.
        std::size_t covered = 0;
        for (std::size_t p = 0; p < 32 * 32; ++p) {
          const double r = img[p], g = img[1024 + p], b = img[2048 + p];
          if (std::max({r, g, b}) - std::min({r, g, b}) > 0.4) ++covered;
        }
        EXPECT_GE(covered, 16u) << kShapes[shape] << " " << kColors[color];
      }
    }
  }
}

TEST(Grammar, AcceptsAndRejects) {
  EXPECT_TRUE(parses_under_grammar("a red circle"));
  EXPECT_TRUE(parses_under_grammar("a red circle above a blue square"));
  EXPECT_TRUE(parses_under_grammar("a photo of a green triangle"));
  EXPECT_TRUE(
      parses_under_grammar("a person with a red circle and a red square and a blue circle"));
  EXPECT_FALSE(parses_under_grammar(""));
  EXPECT_FALSE(parses_under_grammar("a circle"));
  EXPECT_FALSE(parses_under_grammar("a red circle above"));
  EXPECT_FALSE(parses_under_grammar("a red circle and a blue square"));
  EXPECT_FALSE(parses_under_grammar("a photo with a red circle"));
}

TEST(Corrupt, PinnedColorSwap) {
  EXPECT_EQ(corrupt_caption("a red circle", 0, SwapKind::kColor), "a green circle");
}

TEST(Corrupt, AlwaysChangesTagsAndStaysGrammatical) {
  const auto corpus = generate_corpus(5, 300);
  std::uint64_t seed = 0;
  for (const auto& ex : corpus) {
    std::size_t shapes_present = 0;
    for (auto sh : kShapes) shapes_present += std::count(ex.tags.begin(), ex.tags.end(), sh);
    for (auto kind : {SwapKind::kAny, SwapKind::kColor, SwapKind::kShape}) {
      if (kind == SwapKind::kShape && shapes_present == kShapes.size()) {
        EXPECT_THROW(corrupt_caption(ex.caption, ++seed, kind), InvalidArgument);
        continue;
      }
      const auto bad = corrupt_caption(ex.caption, ++seed, kind);
      EXPECT_NE(bad, ex.caption);
      EXPECT_NE(caption_tags(bad), ex.tags);
      EXPECT_TRUE(parses_under_grammar(bad)) << bad;
    }
  }
}

TEST(Corrupt, NothingToSwapThrows) {
  EXPECT_THROW(corrupt_caption("a photo of", 1), InvalidArgument);
  // Every shape already present: no absent shape to swap in.
  EXPECT_THROW(corrupt_caption("a red circle and a red square and a red triangle", 1,
                               SwapKind::kShape),
               InvalidArgument);
}

TEST(Glyph, DescriptorsAreDeterministicUnitAndSeparated) {
  for (std::size_t g = 0; g < kGlyphCount; ++g) {
    const auto v = entity_descriptor(g);
    EXPECT_EQ(v, entity_descriptor(g));
    ASSERT_EQ(v.size(), kDescriptorDim);
    EXPECT_NEAR(std::sqrt(dot(v, v)), 1.0, 1e-9);
  }
  int pairs = 0;
  for (std::size_t a = 0; a < kGlyphCount; ++a)
    for (std::size_t b = a + 1; b < kGlyphCount; ++b, ++pairs)
      EXPECT_LE(dot(entity_descriptor(a), entity_descriptor(b)), 0.3);
  EXPECT_EQ(pairs, 28);
  EXPECT_THROW(entity_descriptor(kGlyphCount), InvalidArgument);
}

TEST(Glyph, ImageDescriptorMatchesGallery) {
  const auto corpus = generate_corpus(9, 300);
  std::size_t with_glyph = 0;
  for (const auto& ex : corpus) {
    const auto probe = descriptor_from_image(ex.image);
    if (!ex.glyph) {
      EXPECT_FALSE(probe.has_value());
      continue;
    }
    ++with_glyph;
    ASSERT_TRUE(probe.has_value());
    EXPECT_GT(dot(*probe, *ex.entity_descriptor), 0.95);
  }
  EXPECT_GT(with_glyph, 50u);
}

TEST(Glyph, GalleryJsonListsAllGlyphs) {
  const auto json = gallery_json();
  for (std::size_t g = 0; g < kGlyphCount; ++g) {
    EXPECT_NE(json.find(glyph_name(g)), std::string::npos);
  }
}

TEST(ProcessStats, EnumerationIsConsistent) {
  const auto s = caption_process_stats();
  // 12 noun phrases; 1, 2 (x3 relations) or 3 phrases; 3 prefixes.
  EXPECT_EQ(s.distinct_captions, 3u * (12 + 12 * 12 * 3 + 12 * 12 * 12));
  EXPECT_GT(s.caption_entropy, s.tag_entropy);
  EXPECT_NEAR(s.conditional_entropy, s.caption_entropy - s.tag_entropy, 1e-12);
  EXPECT_GT(s.per_token_perplexity, 1.0);
  // Mean tokens: prefix 0.3*3, scene 0.4*3 + 0.4*7 + 0.2*11, plus the end marker.
  EXPECT_NEAR(s.mean_tokens, 0.9 + 1.2 + 2.8 + 2.2 + 1.0, 1e-9);
}

TEST(Export, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "capforge_synth_export";
  std::filesystem::remove_all(dir);
  const auto corpus = generate_corpus(4, 12);
  export_corpus(corpus, dir.string());
  const auto back = import_corpus(dir.string());
  ASSERT_EQ(back.size(), corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(back[i].image, corpus[i].image);
    EXPECT_EQ(back[i].tags, corpus[i].tags);
    EXPECT_EQ(back[i].caption, corpus[i].caption);
    EXPECT_EQ(back[i].glyph, corpus[i].glyph);
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace capforge::synth
