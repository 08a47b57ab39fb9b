#pragma once

#include <stdexcept>
#include <string>

namespace postkernel {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidMatrixError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatchError : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRangeError : public Error {
 public:
  using Error::Error;
};

/// No surviving posterior mass, or a dataset that contradicts itself.
class InconsistentDatasetError : public Error {
 public:
  using Error::Error;
};

class InvalidPriorError : public Error {
 public:
  using Error::Error;
};

class BudgetExceededError : public Error {
 public:
  using Error::Error;
};

class DivergedRunError : public Error {
 public:
  DivergedRunError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace postkernel
