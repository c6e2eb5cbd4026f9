#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ivfrailty {

enum class ErrorKind {
  EmptyData,
  DimensionMismatch,
  NonFiniteValue,
  TiedEventTimes,
  InvalidDesign,
  IdentificationViolation,
  InvalidParameter,
  BaselineNotCovering,
  DegenerateWeights,
  SingularHessian,
  MonotoneLikelihoodDivergence,
  Separation,
  NonConvergence,
  TooManyFailures,
  InvalidSpec,
  EmptyEstimates,
  InputFormat,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ivfrailty
