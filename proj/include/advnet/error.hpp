#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace advnet {

// Every failure the library raises derives from Error. The CLI maps
// ConfigError (and its subclasses) to exit code 1 and everything else to 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid shapes, architectures, hyper-parameters, unknown keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data violating a documented precondition (e.g. soft targets that do
// not sum to one).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. running backward twice on one tape.
class UsageError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced or consumed by an engine operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Model state that is not ready for the requested operation.
class StateError : public Error {
 public:
  using Error::Error;
};

class AttackError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// Malformed binary or text input. offset is the byte (or line) position of
// the first inconsistency.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : Error("parse error at offset " + std::to_string(offset) + ": " + what),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class MagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class VersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class ArchitectureMismatchError : public CheckpointError {
 public:
  ArchitectureMismatchError(const std::string& expected, const std::string& found)
      : CheckpointError("architecture mismatch: model is '" + expected +
                        "' but checkpoint holds '" + found + "'"),
        expected_(expected),
        found_(found) {}
  const std::string& expected() const noexcept { return expected_; }
  const std::string& found() const noexcept { return found_; }

 private:
  std::string expected_;
  std::string found_;
};

class ParameterMismatchError : public CheckpointError {
 public:
  ParameterMismatchError(const std::string& name, const std::string& what)
      : CheckpointError("parameter '" + name + "': " + what), name_(name) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

}  // namespace advnet
