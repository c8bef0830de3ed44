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

#include "capforge/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "capforge/errors.hpp"

namespace capforge {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void Tensor::check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw ShapeError("tensor rank must be 1..4, got " +
                     std::to_string(shape.size()));
  }
  for (std::size_t extent : shape) {
    if (extent == 0) throw ShapeError("zero extent in shape " + shape_str(shape));
  }
}

Tensor::Tensor(Shape shape, Scalar fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::span<const Scalar> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  check_shape(shape_);
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

Tensor Tensor::vector(std::initializer_list<Scalar> values) {
  return Tensor({values.size()}, std::span<const Scalar>(values.begin(), values.size()));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape_));
  }
  return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " +
                     shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(Scalar value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](Scalar v) { return std::isfinite(v); });
}

namespace io {
namespace {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

template <typename T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T v{};
  read_exact(in, reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void write_u16(std::ostream& out, std::uint16_t v) { write_le(out, v); }
void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }
void write_f64(std::ostream& out, double v) {
  write_le(out, std::bit_cast<std::uint64_t>(v));
}
std::uint16_t read_u16(std::istream& in) { return read_le<std::uint16_t>(in); }
std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return read_le<std::uint64_t>(in); }
double read_f64(std::istream& in) {
  return std::bit_cast<double>(read_le<std::uint64_t>(in));
}

void read_exact(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError("unexpected end of stream");
  }
}

}  // namespace io

namespace {
constexpr char kTensorMagic[4] = {'C', 'F', 'T', 'N'};
}

void write_tensor(std::ostream& out, const Tensor& tensor) {
  out.write(kTensorMagic, 4);
  io::write_u16(out, kTensorFormatVersion);
  const auto rank = static_cast<std::uint8_t>(tensor.rank());
  out.put(static_cast<char>(rank));
  for (std::size_t extent : tensor.shape()) {
    io::write_u32(out, static_cast<std::uint32_t>(extent));
  }
  for (Scalar v : tensor.data()) io::write_f64(out, static_cast<double>(v));
  if (!out) throw IoError("failed writing tensor");
}

Tensor read_tensor(std::istream& in) {
  char magic[4];
  io::read_exact(in, magic, 4);
  if (std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw FormatError("bad tensor magic");
  }
  const std::uint16_t version = io::read_u16(in);
  if (version != kTensorFormatVersion) {
    throw FormatError("unsupported tensor version " + std::to_string(version));
  }
  char rank_byte;
  io::read_exact(in, &rank_byte, 1);
  const auto rank = static_cast<std::uint8_t>(rank_byte);
  if (rank < 1 || rank > 4) {
    throw FormatError("tensor rank " + std::to_string(rank) + " out of range");
  }
  Shape shape(rank);
  for (auto& extent : shape) {
    extent = io::read_u32(in);
    if (extent == 0) throw FormatError("zero extent in stored tensor");
  }
  std::vector<Scalar> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<Scalar>(io::read_f64(in));
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_tensor(out, tensor);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_tensor(in);
}

}  // namespace capforge
