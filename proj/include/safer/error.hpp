#pragma once

#include <stdexcept>
#include <string>

namespace safer {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Scene, script, suite or trace document does not conform to its schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Invalid geometry (non-convex polygon, too few vertices, ...).
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Inputs to a numerical routine have the wrong shape or are non-finite.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// The QP solver exceeded its iteration cap. Indicates a solver bug, not an
/// infeasible problem.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// A reference to an entity that does not exist in the world.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

/// Plan or constraint text rejected by the grammar.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::string reason, std::string raw)
      : Error("line " + std::to_string(line) + ": " + reason + " in \"" + raw + "\""),
        line_(line),
        reason_(std::move(reason)),
        raw_(std::move(raw)) {}

  std::size_t line() const { return line_; }
  const std::string& reason() const { return reason_; }
  const std::string& raw() const { return raw_; }

 private:
  std::size_t line_;
  std::string reason_;
  std::string raw_;
};

/// Agent transport failure (after retries) or script exhaustion.
class BackendError : public Error {
 public:
  using Error::Error;
};

/// A prompt template needs a context field that was not supplied.
class PromptError : public Error {
 public:
  using Error::Error;
};

/// The model judge's reply did not follow the schema, even after a retry.
class UnparseableJudgment : public Error {
 public:
  using Error::Error;
};

}  // namespace safer
