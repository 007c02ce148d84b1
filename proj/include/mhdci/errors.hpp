#pragma once

#include <stdexcept>
#include <string>

namespace mhdci {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedDimension : public Error {
 public:
  explicit UnsupportedDimension(int n)
      : Error("unsupported dimension n=" + std::to_string(n) + " (need 4 <= n <= 8)"), n_(n) {}
  int dimension() const { return n_; }

 private:
  int n_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NonUnitInput : public InvalidArgument {
 public:
  NonUnitInput(const std::string& what, double measured)
      : InvalidArgument(what + " is not a unit vector (|.|=" + std::to_string(measured) + ")"),
        measured_(measured) {}
  double measured_norm() const { return measured_; }

 private:
  double measured_;
};

class StructuralError : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class InternalConsistency : public Error {
 public:
  using Error::Error;
};

class OutsideHull : public Error {
 public:
  OutsideHull(const std::string& what, double functional_value)
      : Error(what + " (separating functional value " + std::to_string(functional_value) + ")"),
        value_(functional_value) {}
  double functional_value() const { return value_; }

 private:
  double value_;
};

class NumericalDegeneracy : public Error {
 public:
  using Error::Error;
};

/// Signals that every atom of a decomposition shares (u, b): the point is
/// effectively on K and no wave-cone segment exists.
class AtConstraintSet : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class CoveringError : public Error {
 public:
  CoveringError(const std::string& what, double achieved)
      : Error(what + " (achieved fraction " + std::to_string(achieved) + ")"), achieved_(achieved) {}
  double achieved_fraction() const { return achieved_; }

 private:
  double achieved_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SchemeError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  AlignmentError(const std::string& what, double misalignment)
      : Error(what + " (|W e1| = " + std::to_string(misalignment) + ")"), misalignment_(misalignment) {}
  double misalignment() const { return misalignment_; }

 private:
  double misalignment_;
};

class PlacementError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mhdci
