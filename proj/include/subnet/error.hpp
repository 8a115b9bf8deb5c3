#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace subnet {

enum class ErrorKind {
  contract,    // caller violated a precondition (shapes, lengths, ranges)
  config,      // invalid configuration or schema violation
  numeric,     // non-finite values or divergence
  io,          // file system failures
  parse,       // malformed text input (CSV, JSON)
  version,     // checkpoint version mismatch
  corrupt,     // truncated or inconsistent checkpoint
  degenerate,  // statistically degenerate data (constant channel, zero variance)
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised when a value becomes non-finite. `index` carries the step, section
// start or component that produced it when known.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::optional<std::size_t> index = {})
      : Error(ErrorKind::numeric, what), index_(index) {}

  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  std::optional<std::size_t> index_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorKind::contract, what);
}

}  // namespace subnet
