// Copyright 2026 The ebf Authors. All Rights Reserved.
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

#pragma once

#include <stdexcept>
#include <string>

namespace ebf {

// Error categories. Values are stable: the C API maps them 1:1 onto
// ebf_status codes.
enum class Errc {
  kShape = 1,
  kConfig = 2,
  kValue = 3,
  kFormat = 4,
  kTruncated = 5,
  kNameMismatch = 6,
  kIo = 7,
  kNumeric = 8,
  kInternal = 9,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

inline void check(bool condition, Errc code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace ebf
