#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rtfe {

enum class ErrorCode {
  // storage
  kDuplicateTable,
  kInvalidSchema,
  kUnknownTable,
  kSchemaMismatch,
  kOutOfOrder,
  kResourceExhausted,
  // sql
  kLexError,
  kSyntaxError,
  kUnsupportedFeature,
  // planner
  kUnknownColumn,
  kUnknownFunction,
  kTypeError,
  kFingerprintMismatch,
  kStalePlan,
  // exec / ml
  kDuplicateName,
  kNonFiniteWeight,
  kIoError,
  // serving
  kDuplicateDeployment,
  kUnknownDeployment,
  kAdmissionTimeout,
  kMalformed,
  kInvalidConfig,
  kBindFailure,
  kInsufficientData,
  kInternal,
};

std::string_view to_string(ErrorCode code);

/// Wire-level error code. Several internal codes collapse onto one wire code
/// (e.g. every lexer/parser failure is reported as `parse_error`).
std::string_view wire_code(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  Error(ErrorCode code, std::string message, std::size_t offset,
        std::vector<std::string> expected = {})
      : std::runtime_error(std::move(message)),
        code_(code),
        offset_(offset),
        has_offset_(true),
        expected_(std::move(expected)) {}

  ErrorCode code() const noexcept { return code_; }
  bool has_offset() const noexcept { return has_offset_; }
  std::size_t offset() const noexcept { return offset_; }
  const std::vector<std::string>& expected() const noexcept { return expected_; }

 private:
  ErrorCode code_;
  std::size_t offset_ = 0;
  bool has_offset_ = false;
  std::vector<std::string> expected_;
};

}  // namespace rtfe
