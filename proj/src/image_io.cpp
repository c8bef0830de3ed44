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

#include "capforge/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include <openssl/evp.h>
#include <png.h>

#include "capforge/errors.hpp"

namespace capforge::image {
namespace {

// Frees libpng's decoder state on every exit path.
struct PngImage {
  png_image image{};
  PngImage() {
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

}  // namespace

Tensor decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw FormatError("not a PNG image");
  }
  PngImage png;
  if (!png_image_begin_read_from_memory(&png.image, bytes.data(), bytes.size())) {
    throw FormatError(std::string("PNG: ") + png.image.message);
  }
  png.image.format = PNG_FORMAT_RGB;
  const std::size_t width = png.image.width, height = png.image.height;
  if (width == 0 || height == 0) throw FormatError("PNG: empty image");
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(png.image));
  png_color black{0, 0, 0};
  if (!png_image_finish_read(&png.image, &black, pixels.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG: ") + png.image.message);
  }
  Tensor out({3, height, width});
  auto dst = out.data();
  const std::size_t plane = height * width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) dst[c * plane + i] = pixels[3 * i + c] / Scalar(255);
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("encode_png: expected 3 x H x W, got " + shape_str(image.shape()));
  }
  const std::size_t height = image.dim(1), width = image.dim(2), plane = height * width;
  std::vector<std::uint8_t> pixels(3 * plane);
  const auto src = image.data();
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(static_cast<double>(src[c * plane + i]), 0.0, 1.0);
      pixels[3 * i + c] = static_cast<std::uint8_t>(std::lround(v * 255));
    }
  }
  PngImage png;
  png.image.width = static_cast<png_uint_32>(width);
  png.image.height = static_cast<png_uint_32>(height);
  png.image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png.image, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG encode: ") + png.image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png.image, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG encode: ") + png.image.message);
  }
  out.resize(size);
  return out;
}

Tensor read_png(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), {}};
  return decode_png(bytes);
}

void write_png(const std::string& path, const Tensor& image) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path);
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::string compact;
  compact.reserve(text.size());
  for (unsigned char c : text) {
    if (!std::isspace(c)) compact.push_back(static_cast<char>(c));
  }
  if (compact.size() % 4 != 0) throw FormatError("base64: length is not a multiple of 4");
  if (compact.empty()) return {};
  std::vector<std::uint8_t> out(compact.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(compact.data()),
                                static_cast<int>(compact.size()));
  if (n < 0) throw FormatError("base64: invalid character");
  std::size_t padding = 0;
  if (compact.back() == '=') ++padding;
  if (compact[compact.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

}  // namespace capforge::image
