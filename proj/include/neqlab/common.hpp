#pragma once

#include <array>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace neqlab {

using Complex = std::complex<double>;

/// A point in configuration space. One- and two-dimensional problems share
/// this type; the second coordinate is ignored when dims() == 1.
using Config = std::array<double, 2>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr Complex kI{0.0, 1.0};

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input: bad parameters, broken invariants, malformed manifests.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A computation that could not complete (step underflow, too many failed
/// trajectories, loss of positivity, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Guidance velocity requested at a node of the wave function.
class NodeError : public NumericalError {
 public:
  NodeError() : NumericalError("velocity undefined here: configuration sits on a node of the wave function") {}
};

}  // namespace neqlab
