#pragma once

#include <stdexcept>
#include <string>

namespace ctg {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Input text contains no usable sentence.
class EmptyInputError : public Error {
 public:
  using Error::Error;
};

/// Malformed JSON document; `path` is a JSON-pointer to the offending node.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& path, const std::string& msg)
      : Error(path + ": " + msg), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// A domain-type invariant does not hold (e.g. gap size out of range).
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

/// No configured provider supplies feature k for candidate i at size j.
class MissingFeatureError : public Error {
 public:
  MissingFeatureError(int k, int i, int j, const std::string& msg)
      : Error(msg), k_(k), i_(i), j_(j) {}
  int feature() const { return k_; }
  int candidate() const { return i_; }
  int size() const { return j_; }

 private:
  int k_, i_, j_;
};

/// Malformed tabular file; carries the 1-based row/column location.
class FormatError : public Error {
 public:
  FormatError(std::size_t row, std::size_t col, const std::string& msg)
      : Error("row " + std::to_string(row) + ", column " + std::to_string(col) +
              ": " + msg),
        row_(row),
        col_(col) {}
  std::size_t row() const { return row_; }
  std::size_t col() const { return col_; }

 private:
  std::size_t row_, col_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// Exhaustive enumeration would exceed the configured evaluation cap.
/// `count` is the decimal rendering of the full enumeration size.
class TooLargeError : public Error {
 public:
  TooLargeError(std::string count, const std::string& msg)
      : Error(msg), count_(std::move(count)) {}
  const std::string& count() const { return count_; }

 private:
  std::string count_;
};

class ZeroVarianceError : public Error {
 public:
  using Error::Error;
};

class NotEnoughCandidatesError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctg
