// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#pragma once

#include <stdexcept>
#include <string>

namespace tgc {

enum class ErrorCode {
  kInvalidArgument = 1,
  kIo = 2,
  kFormat = 3,
  kVersion = 4,
  kNumeric = 5,
  kNotFound = 6,
};

/// Every failure raised by the core library. The C API maps `code()` onto
/// its status enum one to one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorCode::kInvalidArgument, what);
}

}  // namespace tgc
