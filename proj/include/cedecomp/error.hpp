#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cedecomp {

// Broad failure classes. The CLI maps these onto its exit-code contract.
enum class ErrorKind {
  Parse,       // malformed input, count mismatch, schema mismatch, I/O
  Validation,  // well-formed input that breaks a record/manifest invariant
  Identity,    // decomposition residual outside tolerance
  Domain,      // bad arguments to a library call (empty corpus, infeasible spec, ...)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Parse failure located at a 1-based line of a record file. line == 0 means
// the manifest or the file as a whole.
class ParseError : public Error {
 public:
  ParseError(std::uint64_t line, std::string field, const std::string& message)
      : Error(ErrorKind::Parse, format(line, field, message)), line_(line), field_(std::move(field)) {}

  std::uint64_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  static std::string format(std::uint64_t line, const std::string& field, const std::string& message) {
    std::string out;
    if (line > 0) out += "line " + std::to_string(line) + ": ";
    if (!field.empty()) out += "field '" + field + "': ";
    return out + message;
  }

  std::uint64_t line_;
  std::string field_;
};

}  // namespace cedecomp
