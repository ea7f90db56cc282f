#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace rcalad {

enum class ErrorCode {
  shape,
  config,
  contract,
  numerical,
  degenerate_batch,
  ingestion,
  unavailable_score,
  undefined_metric,
  insufficient_data,
  io,
  checkpoint_version,
  checkpoint_corrupt,
};

std::string_view to_string(ErrorCode code);

/// Base exception for every failure raised by the library. The code is
/// stable and machine readable; the message is for humans.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

/// Raised when a loss term evaluates to NaN/Inf. Carries the term name.
class NumericalError : public Error {
public:
  NumericalError(std::string term, const std::string& message)
      : Error(ErrorCode::numerical, message), term_(std::move(term)) {}

  const std::string& term() const noexcept { return term_; }

private:
  std::string term_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

} // namespace rcalad
