#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gunet {

/// Tensor/array dimensions do not satisfy an operation's requirements.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A group element is outside the element set of the requested group.
class InvalidElementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// User-facing configuration is invalid (bad sizes, ratios, missing files).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Internal state required by an operation is missing or inconsistent.
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A serialized file failed validation; carries the byte offset of the fault.
class CorruptFileError : public std::runtime_error {
 public:
  CorruptFileError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace gunet
