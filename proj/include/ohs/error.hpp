// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ohs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid hyperparameters or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Value outside the domain of an operation (bad box size, out-of-range cell).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based line (text) or byte offset (binary).
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t position, const std::string& what)
      : Error(source + ":" + std::to_string(position) + ": " + what),
        source_(source),
        position_(position) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t position() const noexcept { return position_; }

 private:
  std::string source_;
  std::size_t position_;
};

}  // namespace ohs
