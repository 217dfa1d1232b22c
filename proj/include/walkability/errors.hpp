#pragma once

#include <stdexcept>
#include <string>

namespace walkability {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidCoordinate : public Error {
 public:
  using Error::Error;
};

/// Structural problem with an input file (missing column, unparsable field).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Too many malformed rows for the configured tolerance.
class DataQualityError : public Error {
 public:
  using Error::Error;
};

class DuplicateIdError : public Error {
 public:
  DuplicateIdError(const std::string& what, std::string id)
      : Error(what), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// Cross-file reference that does not resolve (e.g. unknown cell id).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class EmptyGraphError : public Error {
 public:
  using Error::Error;
};

/// Failure of one pipeline stage; carries the stage name for the CLI.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace walkability
