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

#ifndef CAPFORGE_IMAGE_IO_HPP_
#define CAPFORGE_IMAGE_IO_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "capforge/tensor.hpp"

namespace capforge::image {

// PNG bytes to a 3 x H x W tensor with values in [0, 1]. Gray and palette
// images are expanded to RGB; alpha is composited onto black.
Tensor decode_png(std::span<const std::uint8_t> bytes);
// 3 x H x W in [0, 1] (clamped) to 8-bit RGB PNG bytes.
std::vector<std::uint8_t> encode_png(const Tensor& image);

Tensor read_png(const std::string& path);
void write_png(const std::string& path, const Tensor& image);

// Standard alphabet with padding; ASCII whitespace is ignored.
std::vector<std::uint8_t> base64_decode(std::string_view text);
std::string base64_encode(std::span<const std::uint8_t> bytes);

}  // namespace capforge::image

#endif  // CAPFORGE_IMAGE_IO_HPP_
