#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace casekit {

enum class ErrorCode {
  MissingField,
  DuplicateId,
  IoError,
  EmptyCorpus,
  UnknownDoc,
  VersionMismatch,
  EmptyVocabulary,
  EmptyInput,
  OutOfVocab,
  NonFinite,
  AllMasked,
  EmptyDataset,
  LengthMismatch,
  ParseError,
  InvalidConfig,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// ParseError that remembers the 1-based line it was raised on.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace casekit
