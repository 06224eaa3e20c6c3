#pragma once

#include <stdexcept>
#include <cstdio>
#include <string>

namespace kinhom {

namespace detail {
inline std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}
}  // namespace detail

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Raised by kernel construction when positivity or parity is violated.
class KernelRejected : public Error {
 public:
  using Error::Error;
};

/// A right-hand side is not orthogonal to the adjoint kernel (Fredholm
/// alternative fails). `defect` is the measured moment.
class CompatibilityViolation : public Error {
 public:
  CompatibilityViolation(const std::string& moment, double defect)
      : Error("compatibility violation: " + moment + " = " + detail::sci(defect)),
        moment_(moment), defect_(defect) {}
  const std::string& moment() const noexcept { return moment_; }
  double defect() const noexcept { return defect_; }

 private:
  std::string moment_;
  double defect_;
};

/// Same as CompatibilityViolation, for the elliptic cell operators L, L*.
class RangeViolation : public Error {
 public:
  RangeViolation(const std::string& moment, double defect)
      : Error("range violation: " + moment + " = " + detail::sci(defect)), defect_(defect) {}
  double defect() const noexcept { return defect_; }

 private:
  double defect_;
};

class SingularSystem : public Error {
 public:
  using Error::Error;
};

class KernelNotSimple : public Error {
 public:
  using Error::Error;
};

class NonPositive : public Error {
 public:
  using Error::Error;
};

class NonPositiveGap : public Error {
 public:
  using Error::Error;
};

class EllipticityFailure : public Error {
 public:
  using Error::Error;
};

class IndefiniteTensor : public Error {
 public:
  using Error::Error;
};

class ResolutionError : public Error {
 public:
  using Error::Error;
};

/// An iterative or direct solve missed its residual target.
class SolverStall : public Error {
 public:
  SolverStall(const std::string& what, double residual)
      : Error(what + " (relative residual " + detail::sci(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace kinhom
