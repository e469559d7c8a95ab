#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace phrom {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Newton iteration cap exceeded inside an implicit step.
class NewtonDivergence : public Error {
 public:
  NewtonDivergence(std::size_t step, int iterations, double residual)
      : Error("Newton did not converge at step " + std::to_string(step) + " after " +
              std::to_string(iterations) + " iterations (residual " + std::to_string(residual) + ")"),
        step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class SingularJacobian : public Error {
 public:
  explicit SingularJacobian(std::size_t step)
      : Error("singular Newton matrix at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

class MalformedSnapshot : public Error {
 public:
  using Error::Error;
};

class NoNonlinearPart : public Error {
 public:
  NoNonlinearPart() : Error("model has no nonlinear Hamiltonian part") {}
};

class SelectionFailure : public Error {
 public:
  using Error::Error;
};

/// Supplied reduced operators break skew/symmetric/PSD structure.
class StructureViolation : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace phrom
