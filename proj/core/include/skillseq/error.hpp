#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace skillseq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad schema, inconsistent dimensions, violated preconditions.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A numerical or algorithmic failure on otherwise valid input.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Fixed-point iteration that did not reach its tolerance.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd last_iterate,
                   double residual)
      : NumericalError(what + " (residual " + std::to_string(residual) + ")"),
        last_iterate_(std::move(last_iterate)),
        residual_(residual) {}

  const Eigen::VectorXd& last_iterate() const { return last_iterate_; }
  double residual() const { return residual_; }

 private:
  Eigen::VectorXd last_iterate_;
  double residual_;
};

}  // namespace skillseq
