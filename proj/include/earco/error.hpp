#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace earco {

enum class ErrorCode {
  kParse,
  kDuplicate,
  kPrecondition,
  kEmptyCorpus,
  kTransport,
  kRemote,
  kProtocol,
  kUnmatchedRequest,
  kDimensionMismatch,
  kEmptyIndex,
  kCorruptFile,
  kVersionMismatch,
  kIo,
  kInsufficientData,
  kMutationParse,
  kSynthesize,
  kOptimization,
  kValidation,
  kAssembly,
  kRetrieval,
  kEmptyOutput,
  kJudgeParse,
  kAggregation,
  kLookup,
  kStageAblation,
  kConfig,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library. The code identifies the contract
/// that was violated; `line()` and `status()` carry extra context for parse
/// and remote errors respectively.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  std::optional<std::size_t> line() const noexcept { return line_; }
  std::optional<int> status() const noexcept { return status_; }

  static Error parse_at(std::size_t line, const std::string& message) {
    Error e(ErrorCode::kParse, "line " + std::to_string(line) + ": " + message);
    e.line_ = line;
    return e;
  }

  static Error remote(int status, const std::string& message) {
    Error e(ErrorCode::kRemote, "HTTP " + std::to_string(status) + ": " + message);
    e.status_ = status;
    return e;
  }

 private:
  ErrorCode code_;
  std::optional<std::size_t> line_;
  std::optional<int> status_;
};

}  // namespace earco
