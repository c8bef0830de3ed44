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

#include "capforge/entity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "capforge/errors.hpp"
#include "capforge/text.hpp"

namespace capforge::entity {
namespace {

bool is_article(const std::string& w) {
  const auto l = text::lowercase(w);
  return l == "a" || l == "an" || l == "the";
}

// Position of `needle` as a contiguous token run in `words`, or npos.
std::size_t find_run(const std::vector<std::string>& words,
                     const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > words.size()) return std::string::npos;
  for (std::size_t i = 0; i + needle.size() <= words.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) {
      return i;
    }
  }
  return std::string::npos;
}

}  // namespace

std::string_view kind_name(Kind kind) {
  return kind == Kind::kCelebrity ? "celebrity" : "landmark";
}

Kind parse_kind(std::string_view name) {
  if (name == "celebrity") return Kind::kCelebrity;
  if (name == "landmark") return Kind::kLandmark;
  throw InvalidArgument("unknown entity kind '" + std::string(name) + "'");
}

EntityGallery::EntityGallery(std::vector<GalleryEntry> entries) : entries_(std::move(entries)) {
  std::set<std::string> names;
  for (auto& e : entries_) {
    if (e.name.empty()) throw InvalidArgument("gallery: entry with empty name");
    if (!names.insert(e.name).second) {
      throw InvalidArgument("gallery: duplicate entity name '" + e.name + "'");
    }
    if (e.embedding.size() != entries_.front().embedding.size()) {
      throw ShapeError("gallery: entry '" + e.name + "' has embedding dimension " +
                       std::to_string(e.embedding.size()) + ", expected " +
                       std::to_string(entries_.front().embedding.size()));
    }
    double sq = 0;
    for (double v : e.embedding) sq += v * v;
    if (!(sq > 0) || !std::isfinite(sq)) {
      throw InvalidArgument("gallery: entry '" + e.name + "' has a zero embedding");
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (auto& v : e.embedding) v *= inv;
    for (auto& w : e.replace_words) w = text::lowercase(w);
  }
}

EntityGallery parse_gallery(std::string_view json) {
  if (std::all_of(json.begin(), json.end(), [](unsigned char c) { return std::isspace(c); })) {
    return {};
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("gallery: ") + e.what());
  }
  if (!doc.is_array()) throw FormatError("gallery: expected a JSON array of entries");
  std::vector<GalleryEntry> entries;
  for (const auto& j : doc) {
    try {
      GalleryEntry e;
      e.name = j.at("name").get<std::string>();
      e.kind = parse_kind(j.at("kind").get<std::string>());
      e.embedding = j.at("embedding").get<std::vector<double>>();
      e.replace_words = j.value("replace_words", std::vector<std::string>{});
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError("gallery entry " + std::to_string(entries.size()) + ": " + ex.what());
    }
  }
  return EntityGallery(std::move(entries));
}

EntityGallery build_gallery(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read gallery " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_gallery(buf.str());
}

std::vector<EntityMatch> recognize(const EntityGallery& gallery, std::span<const double> probe,
                                   double threshold) {
  if (gallery.empty()) return {};
  if (probe.size() != gallery.dim()) {
    throw ShapeError("recognize: probe dimension " + std::to_string(probe.size()) +
                     ", gallery dimension " + std::to_string(gallery.dim()));
  }
  std::vector<EntityMatch> out;
  for (const auto& e : gallery.entries()) {
    double dot = 0;
    for (std::size_t i = 0; i < probe.size(); ++i) dot += probe[i] * e.embedding[i];
    out.push_back({e.name, e.kind, dot, false, e.replace_words});
  }
  std::stable_sort(out.begin(), out.end(), [](const EntityMatch& a, const EntityMatch& b) {
    return a.similarity > b.similarity;
  });
  bool taken[2] = {false, false};
  for (auto& m : out) {
    auto& slot = taken[static_cast<int>(m.kind)];
    if (!slot && m.similarity >= threshold) m.matched = slot = true;
  }
  return out;
}

std::vector<std::string> enrich_caption(std::vector<std::string> words,
                                        std::span<const EntityMatch> matches) {
  std::vector<const EntityMatch*> order;
  for (const auto& m : matches) {
    if (m.matched) order.push_back(&m);
  }
  std::stable_sort(order.begin(), order.end(), [](const EntityMatch* a, const EntityMatch* b) {
    return a->similarity > b->similarity;
  });
  std::vector<bool> fixed(words.size(), false);
  for (const EntityMatch* m : order) {
    const auto name = text::split_words(m->name);
    if (find_run(words, name) != std::string::npos) continue;
    std::size_t at = std::string::npos;
    for (std::size_t i = 0; i < words.size() && at == std::string::npos; ++i) {
      if (fixed[i]) continue;
      const auto w = text::lowercase(words[i]);
      if (std::find(m->replace_words.begin(), m->replace_words.end(), w) !=
          m->replace_words.end()) {
        at = i;
      }
    }
    if (at == std::string::npos) {
      if (m->kind == Kind::kLandmark) {
        words.push_back("at");
        fixed.push_back(true);
        words.insert(words.end(), name.begin(), name.end());
        fixed.insert(fixed.end(), name.size(), true);
      }
      continue;
    }
    std::size_t begin = at;
    if (at > 0 && !fixed[at - 1] && is_article(words[at - 1])) begin = at - 1;
    const auto b = static_cast<std::ptrdiff_t>(begin);
    const auto e = static_cast<std::ptrdiff_t>(at + 1);
    words.erase(words.begin() + b, words.begin() + e);
    fixed.erase(fixed.begin() + b, fixed.begin() + e);
    words.insert(words.begin() + b, name.begin(), name.end());
    fixed.insert(fixed.begin() + b, name.size(), true);
  }
  return words;
}

}  // namespace capforge::entity
