#pragma once

#include <optional>

#include "bepsolve/bifunctions.hpp"
#include "bepsolve/geometry.hpp"

namespace bepsolve {

enum class InnerMode {
  Auto,              // fast path when the bifunction carries an objective
  ObjectiveFastPath, // require the objective route, fail otherwise
  Extragradient,     // force the two-step proximal scheme
};

struct InnerSolveOptions {
  double tol = 1e-8;      // target equilibrium residual
  int max_iter = 10000;
  double prox_step = 0.0; // 0 picks a step from a deterministic slope probe
  InnerMode mode = InnerMode::Auto;
};

/// How ep_residual searches for the worst counter-move.
struct ProbeSpec {
  enum class Kind { Grid, Minimize };
  Kind kind = Kind::Grid;
  double step = 0.0;  // grid probes only

  /// Grid with about 51 points per axis in dimension <= 3, projected
  /// gradient minimization above that.
  static ProbeSpec automatic(const FeasibleSet& K);
};

/// max(0, -inf_y psi(x, y)): zero exactly when no feasible counter-move
/// improves on x.  Grid probes take the infimum over the lattice, so the
/// value is a lower bound that is monotone under grid refinement.
double ep_residual(const Bifunction& f, const FeasibleSet& K, const Vector& x,
                   const ProbeSpec& probe);
double ep_residual(const Bifunction& f, const FeasibleSet& K, const Vector& x);

struct InnerResult {
  Vector x;
  int iterations = 0;
  double residual = 0.0;  // ep_residual at the returned point
  bool converged = false; // residual <= tol
};

/// Solve the equilibrium problem for f over K starting from x0.
///
/// When f carries a variational objective the problem is a constrained
/// minimization and is handled by projected gradient descent with
/// backtracking.  Otherwise a two-step proximal (extragradient) scheme is
/// used; operator-form bifunctions get closed-form proximal steps.
InnerResult solve_ep(const Bifunction& f, const FeasibleSet& K,
                     const Vector& x0, const InnerSolveOptions& opts = {},
                     const std::optional<ProbeSpec>& probe = {});

}  // namespace bepsolve
