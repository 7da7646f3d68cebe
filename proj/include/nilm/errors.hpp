#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nilm {

/// Broad classes of failure. The CLI maps `io` to exit code 1 and every
/// other code to exit code 2.
enum class ErrorCode {
  io,
  not_found,
  parse,
  ordering,
  metadata,
  wiring_cycle,
  vocabulary,
  configuration,
  query,
  scope,
  merge,
  precondition,
  training,
  capacity,
  undefined_statistic,
  format_version,
  invalid_argument,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  bool is_io() const noexcept { return code_ == ErrorCode::io; }

 private:
  ErrorCode code_;
};

class ParseError : public Error {
 public:
  ParseError(std::string file, std::uint64_t row, const std::string& what)
      : Error(ErrorCode::parse,
              file + ": row " + std::to_string(row) + ": " + what),
        file_(std::move(file)),
        row_(row) {}

  const std::string& file() const noexcept { return file_; }
  std::uint64_t row() const noexcept { return row_; }

 private:
  std::string file_;
  std::uint64_t row_;
};

class CycleError : public Error {
 public:
  CycleError(std::vector<int> cycle, const std::string& message)
      : Error(ErrorCode::wiring_cycle, message), cycle_(std::move(cycle)) {}

  /// Meter instances on the cycle, starting at the smallest instance.
  const std::vector<int>& cycle() const noexcept { return cycle_; }

 private:
  std::vector<int> cycle_;
};

class VocabularyError : public Error {
 public:
  VocabularyError(std::string name, std::string suggestion,
                  const std::string& message)
      : Error(ErrorCode::vocabulary, message),
        name_(std::move(name)),
        suggestion_(std::move(suggestion)) {}

  const std::string& name() const noexcept { return name_; }
  /// Nearest vocabulary entry by edit distance; empty if none is close.
  const std::string& suggestion() const noexcept { return suggestion_; }

 private:
  std::string name_;
  std::string suggestion_;
};

}  // namespace nilm
