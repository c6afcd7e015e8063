#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <utility>

namespace bepsolve {

using Vector = Eigen::VectorXd;

/// Thrown when an evaluation produced a non-finite value or an iterative
/// method broke down.  Carries the iterate at which the failure was seen.
class NumericalError : public std::runtime_error {
public:
  NumericalError(const std::string& what, Vector snapshot)
      : std::runtime_error(what), snapshot_(std::move(snapshot)) {}
  const Vector& snapshot() const noexcept { return snapshot_; }

private:
  Vector snapshot_;
};

Vector vec(std::initializer_list<double> xs);

bool all_finite(const Vector& v);

/// Round-trippable decimal formatting ("%.17g") used by every emitter.
std::string format_g17(double v);

}  // namespace bepsolve
