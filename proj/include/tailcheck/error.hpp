#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tailcheck {

// Machine-readable failure categories. The CLI maps these onto exit codes:
// numeric failures exit 2, everything else exits 1.
enum class ErrorCode {
  domain,
  config,
  degenerate_spacings,
  numeric,
  insufficient_tail,
  dimension,
  schema,
  validation,
  io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::domain: return "domain_error";
    case ErrorCode::config: return "config_error";
    case ErrorCode::degenerate_spacings: return "degenerate_spacings";
    case ErrorCode::numeric: return "numeric_error";
    case ErrorCode::insufficient_tail: return "insufficient_tail";
    case ErrorCode::dimension: return "dimension_error";
    case ErrorCode::schema: return "schema_error";
    case ErrorCode::validation: return "validation_error";
    case ErrorCode::io: return "io_error";
  }
  return "unknown_error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCode::domain, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCode::config, what) {}
};

// Raised when the largest and the k-th largest order statistic coincide.
class DegenerateSpacingsError : public Error {
 public:
  explicit DegenerateSpacingsError(const std::string& what)
      : Error(ErrorCode::degenerate_spacings, what) {}
};

// Quadrature failed to reach its tolerance; carries the achieved estimate.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, double error_estimate)
      : Error(ErrorCode::numeric, what), error_estimate_(error_estimate) {}

  double error_estimate() const noexcept { return error_estimate_; }

 private:
  double error_estimate_;
};

class InsufficientTailError : public Error {
 public:
  InsufficientTailError(std::size_t subsample_size, std::size_t k, const std::string& context)
      : Error(ErrorCode::insufficient_tail,
              context + ": subsample has n0=" + std::to_string(subsample_size) +
                  " observations but k=" + std::to_string(k) + " are required"),
        subsample_size_(subsample_size),
        k_(k) {}

  std::size_t subsample_size() const noexcept { return subsample_size_; }
  std::size_t k() const noexcept { return k_; }

 private:
  std::size_t subsample_size_;
  std::size_t k_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ErrorCode::dimension, what) {}
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error(ErrorCode::schema, what) {}
};

class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, std::size_t line)
      : Error(ErrorCode::validation, what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::io, what) {}
};

}  // namespace tailcheck
