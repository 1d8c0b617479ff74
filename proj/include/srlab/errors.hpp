#pragma once

#include <stdexcept>
#include <string>

namespace srlab {

// All library failures derive from Error and carry a short machine-readable
// category ("parse", "domain", "hormander", "numeric", "io", "usage").  The
// CLI prints them as "error:<category>: <message>" and maps the category to
// an exit code, so keep categories stable.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

struct ParseError : Error {
  explicit ParseError(const std::string& m) : Error("parse", m) {}
};

// Bad values fed to an otherwise fine operation (h <= 0, point outside the
// chart, wrong vector size, ...).
struct DomainError : Error {
  explicit DomainError(const std::string& m) : Error("domain", m) {}
};

// Bracket-generating condition fails: the iterated brackets never span the
// tangent space at some point within the explored depth.
struct HormanderError : Error {
  explicit HormanderError(const std::string& m) : Error("hormander", m) {}
};

// Iterative solver did not converge, fit is unusable, matrix numerically
// singular where it must not be, ...
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error("numeric", m) {}
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error("io", m) {}
};

struct UsageError : Error {
  explicit UsageError(const std::string& m) : Error("usage", m) {}
};

// Evaluation hit a genuine singularity (division by zero, sqrt of a negative
// number, |.| differentiated at 0).  Deliberately a subtype of DomainError:
// callers that sample expressions may skip such points but must say so.
struct EvalError : DomainError {
  explicit EvalError(const std::string& m) : DomainError(m) {}
};

}  // namespace srlab
