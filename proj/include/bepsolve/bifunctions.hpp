#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "bepsolve/distances.hpp"
#include "bepsolve/geometry.hpp"

namespace bepsolve {

/// Real-valued function with (possibly finite-difference) gradient.
struct ScalarField {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
};

/// Wrap a value function, deriving the gradient by central differences.
ScalarField make_scalar_field(std::function<double(const Vector&)> value);
ScalarField make_scalar_field(std::function<double(const Vector&)> value,
                              std::function<Vector(const Vector&)> gradient);

/// How a player's scalar objective g turns into a bifunction:
///  - Loss:      psi(x, y) = g(x) - g(y), equilibria maximize g
///  - Advantage: psi(x, y) = g(y) - g(x), equilibria minimize g
/// Both reduce to the canonical form psi(x, y) = G(y) - G(x) with
/// G = -g (Loss) or G = g (Advantage); equilibria minimize G.
enum class Convention { Loss, Advantage };

struct Bifunction {
  std::string label;
  std::function<double(const Vector&, const Vector&)> eval;  // psi(x, y)

  /// Set when psi(x, y) == G(y) - G(x) identically; G is canonical.
  std::optional<ScalarField> difference_objective;

  /// Set when the equilibria of psi over any convex set coincide with the
  /// minimizers of this objective there (used by the fast inner solver).
  std::optional<ScalarField> variational_objective;

  /// Operator form psi(x, y) = <F(x), y - x>, when applicable.
  std::function<Vector(const Vector&)> field;

  /// Gradient of psi(x, .) when available analytically.
  std::function<Vector(const Vector&, const Vector&)> grad_y;
};

Bifunction from_objective(ScalarField g, Convention convention,
                          std::string label = "objective");
Bifunction from_operator(std::function<Vector(const Vector&)> F,
                         std::string label = "operator");

/// Sampled verification of the standing assumptions on a bifunction:
///  L1  psi(x, x) == 0
///  L2  finite values on the sampled set
///  L3  psi(x, .) convex
///  L4  psi(x, y) + psi(y, x) <= 0
///  L5  closedness of the solution map is not checkable by sampling; the
///      report carries a note instead.
struct LReport {
  PropertyCheck l1;
  bool l2_finite = true;
  std::vector<Vector> l2_witness;
  PropertyCheck l3;
  PropertyCheck l4;
  std::string l5_note;
  int samples = 0;

  bool all_ok() const { return l1.ok && l2_finite && l3.ok && l4.ok; }
};

LReport verify_standard_assumptions(const Bifunction& f, const FeasibleSet& K,
                                    int samples = 200, std::uint64_t seed = 0);

/// Proximal regularization of a bilevel pair of bifunctions around `anchor`:
///
///   fbar(x, y) = eps * f(x, y) + h(x, y) + (1/lambda) <grad1 d(x, anchor), y - x>
///
/// When both f and h are difference bifunctions the equilibria of fbar over
/// a convex K are exactly the minimizers over K of
///
///   T(y) = eps * G_f(y) + G_h(y) + (1/lambda) d(y, anchor)
///
/// so the result carries T as its variational objective.
Bifunction regularize(const Bifunction& f, const Bifunction& h, double eps,
                      double lambda, const ProximalPair& pair,
                      const Vector& anchor);

}  // namespace bepsolve
