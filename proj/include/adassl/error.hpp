// Copyright 2026 The adassl Authors.
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

#ifndef ADASSL_ERROR_HPP_
#define ADASSL_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace adassl {

enum class ErrorKind {
  kDimension,
  kDomain,
  kDegenerateInput,
  kDegenerateBatch,
  kConfig,
  kNumeric,
  kIo,
  kUnderdetermined,
};

const char* error_kind_name(ErrorKind kind);

// All library failures are reported through this exception; the C API maps
// the kind onto a status code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace adassl

#endif  // ADASSL_ERROR_HPP_
