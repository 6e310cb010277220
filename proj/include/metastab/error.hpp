#pragma once

#include <stdexcept>
#include <string>

namespace metastab {

enum class ErrorKind {
  configuration,  // bad extents, regime mismatch, index out of range
  validation,     // run configuration rejected
  constraint,     // gauge or KP domain violated
  stability,      // step size too large for the explicit stages
  numerical,      // nonfinite state
  budget,         // projected wall time above the cap
  io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigurationError : Error {
  explicit ConfigurationError(const std::string& w) : Error(ErrorKind::configuration, w) {}
};

// line is 1-based, 0 when the problem is not tied to a line.
struct ValidationError : Error {
  ValidationError(const std::string& w, int line = 0)
      : Error(ErrorKind::validation, line > 0 ? "line " + std::to_string(line) + ": " + w : w), line(line) {}
  int line;
};

struct ConstraintError : Error {
  explicit ConstraintError(const std::string& w) : Error(ErrorKind::constraint, w) {}
};

struct StabilityError : Error {
  explicit StabilityError(const std::string& w) : Error(ErrorKind::stability, w) {}
};

struct NumericalBlowup : Error {
  NumericalBlowup(const std::string& w, double t)
      : Error(ErrorKind::numerical, w + " at t=" + std::to_string(t)), time(t) {}
  double time;
};

struct BudgetExceeded : Error {
  explicit BudgetExceeded(const std::string& w) : Error(ErrorKind::budget, w) {}
};

struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::io, w) {}
};

}  // namespace metastab
