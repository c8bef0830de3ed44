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

#ifndef CAPFORGE_ERRORS_HPP_
#define CAPFORGE_ERRORS_HPP_

#include <stdexcept>
#include <string>
#include <utility>

namespace capforge {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents or dimensions that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Caller supplied a value outside an operation's domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Gradient requested through an op the recorder cannot differentiate.
class UnsupportedOp : public Error {
 public:
  using Error::Error;
};

// Malformed file or byte stream.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Pipeline failure tagged with the stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace capforge

#endif  // CAPFORGE_ERRORS_HPP_
