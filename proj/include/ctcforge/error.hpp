#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ctcforge {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (emissions, ARPA, lexicon, token list).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Input that parses but violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// An utterance in a batch failed; carries the utterance position.
class BatchError : public Error {
 public:
  BatchError(std::size_t index, const std::string& what)
      : Error("utterance " + std::to_string(index) + ": " + what),
        index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace ctcforge
