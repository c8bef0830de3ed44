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

#ifndef CAPFORGE_ENTITY_HPP_
#define CAPFORGE_ENTITY_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace capforge::entity {

enum class Kind { kCelebrity, kLandmark };

std::string_view kind_name(Kind kind);
Kind parse_kind(std::string_view name);  // throws InvalidArgument

struct GalleryEntry {
  std::string name;
  Kind kind = Kind::kCelebrity;
  std::vector<double> embedding;  // unit norm
  std::vector<std::string> replace_words;
};

class EntityGallery {
 public:
  EntityGallery() = default;
  // Normalizes embeddings; rejects duplicate names, zero embeddings and
  // inconsistent dimensions.
  explicit EntityGallery(std::vector<GalleryEntry> entries);

  const std::vector<GalleryEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t dim() const { return entries_.empty() ? 0 : entries_.front().embedding.size(); }

 private:
  std::vector<GalleryEntry> entries_;
};

// JSON array of {name, kind, embedding, replace_words}. Blank input is an
// empty gallery.
EntityGallery parse_gallery(std::string_view json);
EntityGallery build_gallery(const std::string& path);

struct EntityMatch {
  std::string name;
  Kind kind = Kind::kCelebrity;
  double similarity = 0;
  bool matched = false;
  std::vector<std::string> replace_words;
};

// Every entry scored by cosine, sorted by similarity descending (gallery order
// on ties). Only the best entry of each kind can be matched.
std::vector<EntityMatch> recognize(const EntityGallery& gallery, std::span<const double> probe,
                                   double threshold);

// Rewrites the caption for matched entities in similarity order: the first
// generic noun an entity may replace, with a preceding article, becomes the
// entity name. Landmarks with no such noun are appended as "at <name>".
// Entities already named in the caption are left alone.
std::vector<std::string> enrich_caption(std::vector<std::string> words,
                                        std::span<const EntityMatch> matches);

}  // namespace capforge::entity

#endif  // CAPFORGE_ENTITY_HPP_
