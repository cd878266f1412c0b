#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace delphi {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- panel / estimate errors ------------------------------------------------

class EmptyPanelError : public Error {
 public:
  EmptyPanelError() : Error("panel produced no values to aggregate") {}
};

class InsufficientPanelError : public Error {
 public:
  explicit InsufficientPanelError(std::size_t n)
      : Error("confidence interval needs at least 2 values, got " + std::to_string(n)) {}
};

class OutOfRangeError : public Error {
 public:
  explicit OutOfRangeError(double value)
      : Error("estimate value " + std::to_string(value) + " outside [0, 100]"), value_(value) {}
  double value() const { return value_; }

 private:
  double value_;
};

class MalformedIntervalError : public Error {
 public:
  explicit MalformedIntervalError(const std::string& detail)
      : Error("malformed interval: " + detail) {}
};

// ---- prompt / parsing errors ------------------------------------------------

class AnonymityViolationError : public Error {
 public:
  explicit AnonymityViolationError(const std::string& leaked)
      : Error("feedback summary leaks panelist identity: " + leaked), leaked_(leaked) {}
  const std::string& leaked() const { return leaked_; }

 private:
  std::string leaked_;
};

class ParseFailureError : public Error {
 public:
  explicit ParseFailureError(const std::string& detail)
      : Error("response parse failure: " + detail) {}
};

// ---- provider errors ----------------------------------------------------------

class TransportError : public Error {
 public:
  TransportError(int status, const std::string& detail)
      : Error("transport failure (status " + std::to_string(status) + "): " + detail),
        status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class AuthMissingError : public Error {
 public:
  explicit AuthMissingError(const std::string& env_var)
      : Error("API key environment variable '" + env_var + "' is not set") {}
};

class TimeoutError : public Error {
 public:
  explicit TimeoutError(const std::string& detail) : Error("request timed out: " + detail) {}
};

class UnknownQuantityError : public Error {
 public:
  explicit UnknownQuantityError(const std::string& quantity_id)
      : Error("mock oracle has no entry for quantity '" + quantity_id + "'") {}
};

class CassetteMissError : public Error {
 public:
  explicit CassetteMissError(const std::string& fingerprint)
      : Error("cassette has no recording for request " + fingerprint),
        fingerprint_(fingerprint) {}
  const std::string& fingerprint() const { return fingerprint_; }

 private:
  std::string fingerprint_;
};

// ---- protocol errors ----------------------------------------------------------

class ExpertFailureError : public Error {
 public:
  ExpertFailureError(std::string persona_id, int round, const std::string& detail)
      : Error("round " + std::to_string(round) + ": expert '" + persona_id +
              "' failed after repair: " + detail),
        persona_id_(std::move(persona_id)),
        round_(round) {}
  const std::string& persona_id() const { return persona_id_; }
  int round() const { return round_; }

 private:
  std::string persona_id_;
  int round_;
};

class MediatorFailureError : public Error {
 public:
  MediatorFailureError(int round, const std::string& detail)
      : Error("round " + std::to_string(round) + ": mediator failed after repair: " + detail),
        round_(round) {}
  int round() const { return round_; }

 private:
  int round_;
};

class ModeMismatchError : public Error {
 public:
  explicit ModeMismatchError(const std::string& detail) : Error("mode mismatch: " + detail) {}
};

// ---- benchmark data errors ----------------------------------------------------

class UnknownBenchmarkError : public Error {
 public:
  explicit UnknownBenchmarkError(const std::string& id)
      : Error("unknown benchmark id '" + id + "'") {}
};

class IndexOutOfRangeError : public Error {
 public:
  explicit IndexOutOfRangeError(const std::string& detail)
      : Error("holdout index out of range: " + detail) {}
};

class TableShapeError : public Error {
 public:
  explicit TableShapeError(const std::string& detail) : Error("wrong table shape: " + detail) {}
};

// ---- metric errors --------------------------------------------------------------

class ZeroVarianceError : public Error {
 public:
  explicit ZeroVarianceError(const std::string& side)
      : Error("correlation undefined: " + side + " series has zero variance") {}
};

class LengthMismatchError : public Error {
 public:
  explicit LengthMismatchError(const std::string& detail)
      : Error("series length mismatch: " + detail) {}
};

// ---- configuration / experiment errors ----------------------------------------

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& detail) : Error("config error: " + detail) {}
};

class ConfigMismatchError : public Error {
 public:
  explicit ConfigMismatchError(const std::string& detail)
      : Error("panel configs differ beyond personas: " + detail) {}
};

/// Wraps a failure inside an experiment sweep with the holdout/task label it
/// occurred on, remembering whether the root cause was provider-side.
class ExperimentError : public Error {
 public:
  ExperimentError(const std::string& label, const std::string& detail, bool provider_side)
      : Error("instance '" + label + "': " + detail),
        label_(label),
        provider_side_(provider_side) {}
  const std::string& label() const { return label_; }
  bool provider_side() const { return provider_side_; }

 private:
  std::string label_;
  bool provider_side_;
};

}  // namespace delphi
