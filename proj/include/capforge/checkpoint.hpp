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

#ifndef CAPFORGE_CHECKPOINT_HPP_
#define CAPFORGE_CHECKPOINT_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "capforge/tensor.hpp"

namespace capforge {

// Named tensors plus a JSON metadata block. On disk:
//   "CFCK" | u16 version | u32 json length | UTF-8 JSON |
//   u32 tensor count | { u16 name length | name | CFTN tensor }*
// All integers little-endian.
struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add(std::string name, Tensor tensor);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

inline constexpr std::uint16_t kCheckpointFormatVersion = 1;

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a digest of a file's bytes, hex encoded; used as a model identifier.
std::string file_digest(const std::string& path);

}  // namespace capforge

#endif  // CAPFORGE_CHECKPOINT_HPP_
