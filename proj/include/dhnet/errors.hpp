// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dhnet {

/// Invalid shapes, inconsistent configuration, bad arguments.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// NaN/Inf encountered in checked evaluation or gradient extraction.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File system / encoding failures.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Base for checkpoint container failures; concrete subtypes below form
/// the documented error taxonomy.
class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

class BadMagicError : public CheckpointError {
 public:
  explicit BadMagicError(const std::string& msg) : CheckpointError(msg) {}
};

class VersionMismatchError : public CheckpointError {
 public:
  explicit VersionMismatchError(const std::string& msg) : CheckpointError(msg) {}
};

class TruncatedFileError : public CheckpointError {
 public:
  explicit TruncatedFileError(const std::string& msg) : CheckpointError(msg) {}
};

class ShapeMismatchError : public CheckpointError {
 public:
  explicit ShapeMismatchError(const std::string& msg) : CheckpointError(msg) {}
};

}  // namespace dhnet
