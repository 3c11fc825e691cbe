#pragma once

#include <stdexcept>
#include <string>

namespace gapq {

/// Numerical procedure failed (singular system, root count mismatch, defect
/// above the hard threshold, ...).
class ComputationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// The offered minor-road load is at or above capacity; queue-length
/// quantities do not exist.
class InstabilityError : public std::runtime_error {
public:
  InstabilityError(double rho, const std::string& message)
      : std::runtime_error(message), rho_(rho) {}

  double rho() const { return rho_; }

private:
  double rho_;
};

}  // namespace gapq
