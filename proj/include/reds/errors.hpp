/*
 * Copyright 2026 The REDS Toolkit Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace reds {

enum class ErrorKind {
  Shape,
  Bounds,
  Config,
  Numeric,
  Data,
  Infeasible,
  Integrity,
  Size,
};

/// Base exception for every failure raised by the toolkit. The kind drives
/// the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Bounds: return "bounds error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Data: return "data error";
    case ErrorKind::Infeasible: return "infeasible";
    case ErrorKind::Integrity: return "integrity error";
    case ErrorKind::Size: return "size error";
  }
  return "error";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, std::string(to_string(kind)) + ": " + what);
}

}  // namespace reds
