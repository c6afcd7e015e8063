#pragma once

#include <optional>
#include <string>

#include "bepsolve/bifunctions.hpp"
#include "bepsolve/geometry.hpp"
#include "bepsolve/types.hpp"

namespace bepsolve {

// A packaged bilevel test problem: lower-level bifunction f, upper-level
// selection bifunction h, feasible set, a starting point, and the known
// solution when one is available in closed form.
struct Problem {
  std::string name;
  Bifunction f;
  Bifunction h;
  FeasibleSet K;
  Vector x0;
  std::optional<Vector> solution;
};

// Scalar problem on [-1, 1]: minimize x^2 at the lower level, no upper-level
// preference. Solution 0.
Problem problem_p1();

// Planar problem on [-1, 1]^2: the lower level minimizes (x1 + x2)^2, whose
// solution set is the anti-diagonal; the upper level selects the point
// closest to (1/2, -1/2), which lies on that diagonal. Solution (1/2, -1/2).
Problem problem_p2();

// The bifunction psi(x, y) = g(y) - g(x) for the identically-zero objective.
// Used as an "absent" upper level.
Bifunction zero_bifunction(int dim);

// Skew (rotation) operator bifunction about `center`: psi(x, y) = <F(x), y-x>
// with F(x) = (-(x2 - c2), x1 - c1). Monotone with a single equilibrium at
// the center; carries no objective, so solvers must take the operator route.
Bifunction rotation_about(const Vector& center);

// psi(x, y) = G(y) - G(x) for G = half the squared distance to K. Every
// point of K is an equilibrium, which makes the conjugate-minus-support
// quantity computable in closed form: f_z*(q) - sigma(q) = |q|^2 / 2.
Bifunction half_squared_distance(const FeasibleSet& K);

}  // namespace bepsolve
