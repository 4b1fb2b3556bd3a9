#pragma once

#include <stdexcept>
#include <string>

namespace logrep {

/// Broad failure classes; the CLI maps each to a distinct exit code.
enum class ErrorCategory {
  kInvalidArgument,  // caller violated a precondition
  kIo,               // file missing, unreadable or unwritable
  kFormat,           // malformed or version-mismatched artifact
  kData,             // well-formed input that cannot be processed (empty source, degenerate split)
  kNumeric,          // divergence, non-finite values
};

const char* to_string(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message)
      : Error(ErrorCategory::kInvalidArgument, message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error(ErrorCategory::kIo, message) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message) : Error(ErrorCategory::kFormat, message) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& message) : Error(ErrorCategory::kData, message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message) : Error(ErrorCategory::kNumeric, message) {}
};

}  // namespace logrep
