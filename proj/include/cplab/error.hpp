#ifndef CPLAB_ERROR_HPP_
#define CPLAB_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace cplab {

// Base of every error the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated (bad argument, degenerate batch...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, failed factorizations, diverging training.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A loss or parameter went non-finite during training.
class TrainingDivergence : public NumericError {
 public:
  using NumericError::NumericError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised while parsing or validating an experiment config.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& reason)
      : Error(key.empty() ? reason : key + ": " + reason), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

}  // namespace cplab

#endif  // CPLAB_ERROR_HPP_
