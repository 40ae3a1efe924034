// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vqff {

/// Base of every error raised by the library. `module()` names the
/// component that raised it so the CLI can report it on one line.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed or corrupt on-disk data. `offset` is the byte offset at which
/// the problem was detected, or -1 when it does not apply.
class FormatError : public Error {
 public:
  FormatError(std::string module, const std::string& what, std::int64_t offset = -1)
      : Error(std::move(module),
              offset >= 0 ? what + " (at offset " + std::to_string(offset) + ")" : what),
        detail_(what),
        offset_(offset) {}

  std::int64_t offset() const noexcept { return offset_; }
  /// Message without the offset suffix, for re-wrapping with more context.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::int64_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

class BuildError : public Error {
 public:
  using Error::Error;
};

/// A broken internal contract (build-order bug), never user input.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace vqff
