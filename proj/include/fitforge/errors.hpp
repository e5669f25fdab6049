#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fitforge {

// Base of every error thrown by the library. Callers that only care about
// "something went wrong in fitforge" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Carries the offending field name so the service can emit field-level messages.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class NotFoundError : public Error {
 public:
  NotFoundError(std::string kind, std::string id)
      : Error(kind + " not found: " + id), kind_(std::move(kind)), id_(std::move(id)) {}
  const std::string& kind() const { return kind_; }
  const std::string& id() const { return id_; }

 private:
  std::string kind_;
  std::string id_;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class NotALoopError : public Error {
 public:
  using Error::Error;
};

class DegenerateRouteError : public Error {
 public:
  using Error::Error;
};

class InfeasibleKError : public Error {
 public:
  using Error::Error;
};

class UndefinedSimilarityError : public Error {
 public:
  using Error::Error;
};

// Backward called with a cache from another model or from before a parameter change.
class StaleCacheError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  VersionError(unsigned file_version, unsigned reader_version)
      : Error("bundle schema version " + std::to_string(file_version) +
              " is incompatible with reader schema version " + std::to_string(reader_version)),
        file_version_(file_version),
        reader_version_(reader_version) {}
  unsigned file_version() const { return file_version_; }
  unsigned reader_version() const { return reader_version_; }

 private:
  unsigned file_version_;
  unsigned reader_version_;
};

}  // namespace fitforge
