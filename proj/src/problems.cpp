#include "bepsolve/problems.hpp"

#include <stdexcept>

namespace bepsolve {

Problem problem_p1() {
  ScalarField g;
  g.value = [](const Vector& x) { return x[0] * x[0]; };
  g.gradient = [](const Vector& x) { return vec({2.0 * x[0]}); };
  return Problem{"p1",
                 from_objective(g, Convention::Advantage, "inner-objective"),
                 zero_bifunction(1),
                 FeasibleSet::box(vec({-1.0}), vec({1.0})),
                 vec({0.7}),
                 vec({0.0})};
}

Problem problem_p2() {
  ScalarField g1;
  g1.value = [](const Vector& x) {
    const double s = x[0] + x[1];
    return s * s;
  };
  g1.gradient = [](const Vector& x) {
    const double s = x[0] + x[1];
    return vec({2.0 * s, 2.0 * s});
  };
  ScalarField g2;
  g2.value = [](const Vector& x) {
    const double a = x[0] - 0.5;
    const double b = x[1] + 0.5;
    return a * a + b * b;
  };
  g2.gradient = [](const Vector& x) {
    return vec({2.0 * (x[0] - 0.5), 2.0 * (x[1] + 0.5)});
  };
  return Problem{"p2",
                 from_objective(g1, Convention::Advantage, "valley"),
                 from_objective(g2, Convention::Advantage, "selector"),
                 FeasibleSet::box(vec({-1.0, -1.0}), vec({1.0, 1.0})),
                 vec({0.0, 0.0}),
                 vec({0.5, -0.5})};
}

Bifunction zero_bifunction(int dim) {
  if (dim < 1) throw std::invalid_argument("zero_bifunction: dimension must be positive");
  ScalarField g;
  g.value = [](const Vector&) { return 0.0; };
  g.gradient = [dim](const Vector&) { return Vector(Vector::Zero(dim)); };
  return from_objective(g, Convention::Advantage, "zero");
}

Bifunction rotation_about(const Vector& center) {
  if (center.size() != 2) throw std::invalid_argument("rotation_about: planar centers only");
  const Vector c = center;
  return from_operator(
      [c](const Vector& x) { return vec({-(x[1] - c[1]), x[0] - c[0]}); },
      "rotation");
}

Bifunction half_squared_distance(const FeasibleSet& K) {
  ScalarField g;
  g.value = [K](const Vector& y) {
    const Vector p = K.project(y);
    return 0.5 * (y - p).squaredNorm();
  };
  g.gradient = [K](const Vector& y) { return Vector(y - K.project(y)); };
  return from_objective(g, Convention::Advantage, "half-squared-distance");
}

}  // namespace bepsolve
