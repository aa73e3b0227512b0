// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace uvg {

/// Raised when an optimization or evaluation produces a non-finite value.
class NumericError : public std::runtime_error {
  public:
    NumericError(const std::string &what, std::string op = {}, long iteration = -1)
        : std::runtime_error(what), op_(std::move(op)), iteration_(iteration) {}

    const std::string &op() const noexcept { return op_; }
    long iteration() const noexcept { return iteration_; }

  private:
    std::string op_;
    long iteration_;
};

/// File does not follow the expected layout (bad magic, malformed header, ...).
class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// File ends early or carries an inconsistent payload.
class CorruptFileError : public FormatError {
  public:
    CorruptFileError(const std::string &what, std::size_t offset)
        : FormatError(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

  private:
    std::size_t offset_;
};

class UnsupportedVersionError : public FormatError {
  public:
    using FormatError::FormatError;
};

} // namespace uvg
