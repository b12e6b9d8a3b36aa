#pragma once

#include <stdexcept>
#include <string>

namespace stabid {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A symmetric matrix that had to be (negative or positive) definite was not.
/// `block` is the failing block / pivot index when known, else -1.
class NotDefinite : public Error {
 public:
  explicit NotDefinite(const std::string& what, long block = -1)
      : Error(what), block_(block) {}
  long block() const { return block_; }

 private:
  long block_;
};

class NoConvergence : public Error {
 public:
  using Error::Error;
};

/// Failure at a given time index of a recursion (simulation, J0 recursion).
class TimeIndexedError : public Error {
 public:
  TimeIndexedError(const std::string& what, long t) : Error(what), t_(t) {}
  long time_index() const { return t_; }

 private:
  long t_;
};

class SingularJacobian : public TimeIndexedError {
 public:
  using TimeIndexedError::TimeIndexedError;
};

class SimulationFailure : public TimeIndexedError {
 public:
  using TimeIndexedError::TimeIndexedError;
};

class MissingStates : public Error {
 public:
  using Error::Error;
};

class NotInDomain : public Error {
 public:
  using Error::Error;
};

class InfeasibleEqualities : public Error {
 public:
  using Error::Error;
};

/// No strictly feasible point exists (phase-I could not certify one).
class Infeasible : public Error {
 public:
  using Error::Error;
};

class LineSearchFailed : public Error {
 public:
  using Error::Error;
};

class TimeBudgetExceeded : public Error {
 public:
  using Error::Error;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class NotAffine : public Error {
 public:
  using Error::Error;
};

}  // namespace stabid
