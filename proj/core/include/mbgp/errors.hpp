#pragma once

#include <stdexcept>
#include <string>

namespace mbgp {

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UnsupportedOperator : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a Cholesky or normal-equations factorization fails. Carries the
/// nugget that was in effect so a caller can retry with a larger one.
class NumericalConditioning : public std::runtime_error {
 public:
  NumericalConditioning(const std::string& what, double eta)
      : std::runtime_error(what), eta_(eta) {}
  double eta() const noexcept { return eta_; }

 private:
  double eta_;
};

}  // namespace mbgp
