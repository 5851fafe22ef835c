#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fplab {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression text. `position` is a 0-based character offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t position);
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// An expression evaluated to a non-finite value or left its domain.
class EvalFault : public Error {
 public:
  EvalFault(const std::string& message, std::vector<double> point);
  const std::vector<double>& point() const { return point_; }

 private:
  std::vector<double> point_;
};

/// Precondition violation on an argument (bad bounds, p out of range, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Two discrete objects live on different grids.
class GridMismatch : public Error {
 public:
  using Error::Error;
};

/// The diffusion model is unusable (non-PSD D, missing drift, ...).
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Linear solve failure, positivity loss, non-ergodic discretization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A computation cannot produce an answer for these inputs.
class Inconclusive : public Error {
 public:
  using Error::Error;
};

}  // namespace fplab
