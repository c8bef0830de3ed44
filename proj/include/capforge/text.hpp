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

#ifndef CAPFORGE_TEXT_HPP_
#define CAPFORGE_TEXT_HPP_

#include <string>
#include <string_view>
#include <vector>

namespace capforge::text {

// Lowercases ASCII and splits on whitespace; runs of spaces collapse.
std::vector<std::string> tokenize(std::string_view caption);
// Whitespace split that keeps case.
std::vector<std::string> split_words(std::string_view s);
std::string join(const std::vector<std::string>& words, std::string_view sep = " ");
std::string lowercase(std::string_view s);
std::vector<std::string> split(std::string_view s, char delim);

}  // namespace capforge::text

#endif  // CAPFORGE_TEXT_HPP_
