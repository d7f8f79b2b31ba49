#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace geoflow {

template <typename Scalar>
using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vector4 = Eigen::Matrix<Scalar, 4, 1>;
template <typename Scalar>
using Matrix2 = Eigen::Matrix<Scalar, 2, 2>;
template <typename Scalar>
using Matrix4 = Eigen::Matrix<Scalar, 4, 4>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point or parameter outside the region where an object is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The implicit stage solver failed to converge.
class IntegrationError : public Error {
 public:
  using Error::Error;
};

/// No section crossing within the time budget.
class NoReturnError : public Error {
 public:
  using Error::Error;
};

/// The flow is (numerically) tangent to a section.
class TransversalityError : public Error {
 public:
  using Error::Error;
};

/// A section frame too ill-conditioned to represent the linear return map.
class FrameError : public Error {
 public:
  using Error::Error;
};

/// Newton/shooting search for a closed orbit did not converge.
class SearchFailure : public Error {
 public:
  using Error::Error;
};

/// Input violates an operation's precondition (e.g. certifying an elliptic orbit).
class Refusal : public Error {
 public:
  using Error::Error;
};

/// Invalid user configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace constants {
template <typename Scalar>
inline constexpr Scalar pi = Scalar(3.141592653589793238462643383279502884L);
template <typename Scalar>
inline constexpr Scalar two_pi = Scalar(6.283185307179586476925286766559005768L);
}  // namespace constants

}  // namespace geoflow
