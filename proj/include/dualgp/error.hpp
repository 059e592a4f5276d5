#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dualgp {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A covariance/precision that should be positive definite is not.
/// `direction()` is the coordinate carrying the largest component of the
/// eigenvector with the smallest eigenvalue.
class DegenerateGaussian : public Error {
 public:
  DegenerateGaussian(const std::string& what, std::size_t direction, double eigenvalue)
      : Error(what), direction_(direction), eigenvalue_(eigenvalue) {}
  std::size_t direction() const noexcept { return direction_; }
  double eigenvalue() const noexcept { return eigenvalue_; }

 private:
  std::size_t direction_;
  double eigenvalue_;
};

/// Every rung of the jitter ladder failed.
class IndefiniteMatrix : public Error {
 public:
  using Error::Error;
};

/// A natural-gradient step left the Gaussian family (-2 eta2 not SPD).
class StepOvershoot : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace dualgp
