#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace sdpo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (dimensions, unknown keys, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Text or token outside the vocabulary.
class EncodingError : public Error {
 public:
  using Error::Error;
};

/// Precondition on the input domain violated (empty dataset, empty response, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `line()` is 1-based, 0 when not line oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Snapshot bytes do not match their embedded hash, or the file is truncated.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared in a loss or log-ratio.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::string sample_id = {})
      : Error(what), sample_id_(std::move(sample_id)) {}
  const std::string& sample_id() const noexcept { return sample_id_; }

 private:
  std::string sample_id_;
};

/// Training stopped on a numerical failure. The parameters from before the
/// failing update were persisted to `last_good()` when a snapshot directory
/// was configured (empty path otherwise).
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& what, std::filesystem::path last_good)
      : Error(what), last_good_(std::move(last_good)) {}
  const std::filesystem::path& last_good() const noexcept { return last_good_; }

 private:
  std::filesystem::path last_good_;
};

}  // namespace sdpo
