#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "bepsolve/geometry.hpp"

namespace bepsolve {

/// Distance generator for Bregman-type proximal distances: a strictly convex
/// differentiable function on an open convex domain.
struct BregmanGenerator {
  std::string label;
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  std::function<bool(const Vector&)> in_domain;
  bool whole_space = false;
};

/// A proximal distance d with its companion D and the transport coefficient
/// gamma entering the three-point inequality (H4):
///
///   <z - x, grad1(x, y)>  <=  D(z, y) - D(z, x) - gamma * D(x, y)
///
/// d(x, y) is the distance itself, grad1 its gradient in the first slot.
/// For Bregman pairs D == d and the inequality holds with equality at
/// gamma == 1 (the three-point identity).
struct ProximalPair {
  std::string label;
  double gamma = 1.0;
  bool whole_space = true;
  std::function<double(const Vector&, const Vector&)> d;
  std::function<Vector(const Vector&, const Vector&)> grad1;
  std::function<double(const Vector&, const Vector&)> D;
  std::function<bool(const Vector&)> in_domain;

  /// Valid proximal anchor: a point where d(., anchor) is differentiable.
  bool anchor_ok(const Vector& a) const {
    return whole_space || in_domain(a);
  }
};

/// d(x,y) = D(x,y) = 0.5 |x - y|^2, gamma = 1, defined everywhere.
ProximalPair build_euclidean_pair();

/// phi(x) = sum_i x_i ln x_i on {x > 0}; induces the KL divergence.
BregmanGenerator entropy_generator();

/// phi(x) = 0.5 |x|^2; induces the Euclidean pair through the Bregman route.
BregmanGenerator quadratic_generator();

/// Bregman distance d(x,y) = phi(x) - phi(y) - <grad phi(y), x - y>, with
/// D = d and gamma = 1.  d stays finite for first arguments on the closure
/// of the domain (e.g. KL with zeros in x), the second argument must be in
/// the open domain.
ProximalPair build_bregman_pair(const BregmanGenerator& gen);

struct PropertyCheck {
  bool ok = true;
  double min_slack = std::numeric_limits<double>::infinity();
  std::vector<Vector> witness;  // points achieving the minimal slack
};

/// Sampled verification report for a proximal pair over a feasible set.
struct HReport {
  bool domain_ok = true;          // every sampled point inside dom d(., y)
  Vector domain_witness;          // sample outside the domain, if any
  PropertyCheck h2;               // d >= 0, zero only on the diagonal
  PropertyCheck h4;               // three-point inequality slack
  PropertyCheck h6;               // convexity of d(., y) along segments
  double grad_diag_worst = 0.0;   // max |grad1(x, x)|_inf over samples
  int samples = 0;

  bool all_ok() const {
    return domain_ok && h2.ok && h4.ok && h6.ok && grad_diag_worst <= 1e-9;
  }
};

/// Slack of the three-point inequality at (x, y, z); negative means violated.
double h4_slack(const ProximalPair& pair, const Vector& x, const Vector& y,
                const Vector& z);

/// Check H2, H4, H6 and the diagonal gradient on points sampled from the
/// interior of K.  Deterministic for a fixed seed.
HReport verify_proximal_pair(const ProximalPair& pair, const FeasibleSet& K,
                             int samples = 200, std::uint64_t seed = 0);

}  // namespace bepsolve
