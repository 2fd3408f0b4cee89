#pragma once

#include <stdexcept>
#include <string>

namespace asep {

/// Base class for failures that carry domain context (a site, a residual).
/// Precondition violations use std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// exp(log pi_i) left the double range at `site`.
class PiOverflowError : public Error {
 public:
  explicit PiOverflowError(int site)
      : Error("pi overflows double range at site " + std::to_string(site)),
        site_(site) {}
  int site() const noexcept { return site_; }

 private:
  int site_;
};

/// The sigma recursion produced a nonpositive value at `site`.
class NonpositiveSigmaError : public Error {
 public:
  NonpositiveSigmaError(int site, double value)
      : Error("sigma becomes nonpositive at site " + std::to_string(site) +
              " (value " + std::to_string(value) + ")"),
        site_(site),
        value_(value) {}
  int site() const noexcept { return site_; }
  double value() const noexcept { return value_; }

 private:
  int site_;
  double value_;
};

/// A stationary solve did not reach the residual tolerance.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace asep
