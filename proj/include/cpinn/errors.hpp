#pragma once

#include <stdexcept>
#include <string>

namespace cpinn {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A primitive was evaluated outside its domain (division by zero,
/// log of a non-positive value, sqrt of a negative value, ...).
/// The message names the offending primitive.
struct DomainError : Error {
  using Error::Error;
};

/// Vector/matrix dimensions do not line up.
struct ShapeError : Error {
  using Error::Error;
};

/// The Gram matrix of the constraint Jacobian is numerically singular.
struct SingularConstraintError : Error {
  using Error::Error;
};

/// A projection produced a non-finite residual; the candidate is too far
/// from the invariant manifold.
struct ProjectionDivergenceError : Error {
  using Error::Error;
};

/// An initial-condition sampler exhausted its resampling budget.
struct SamplerError : Error {
  using Error::Error;
};

/// A right-hand side or first integral was evaluated at a singular
/// configuration (e.g. two coinciding point vortices).
struct SingularityError : Error {
  using Error::Error;
};

/// Training aborted (non-finite loss or gradient).
struct TrainingError : Error {
  using Error::Error;
};

/// File could not be read or written.
struct IoError : Error {
  using Error::Error;
};

/// Invalid command line or configuration input.
struct UsageError : Error {
  using Error::Error;
};

}  // namespace cpinn
