#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dualsep {

/// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments, shapes or values. The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (wrong shape, wrong chunk size,
/// push after flush, ...).
class ContractError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A quantity is undefined for the given input (rms of an empty signal,
/// SiSNR against a silent reference, SDR of a silent mixture).
class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class RateMismatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Non-finite values or a diverging iteration.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::size_t iteration)
      : Error(what), iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

/// File system failures. The CLI maps these to exit code 2.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file was read but its content is not something we can decode.
class DecodeError : public IoError {
 public:
  using IoError::IoError;
};

/// Weight container failures. `kind` distinguishes the failure mode.
class LoadError : public IoError {
 public:
  enum class Kind { bad_magic, truncated, bad_header, shape_mismatch, missing_tensor, unexpected_tensor, config_mismatch };

  LoadError(Kind kind, const std::string& what) : IoError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace dualsep
