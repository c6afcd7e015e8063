#include "doctest.h"

#include <cmath>

#include "bepsolve/oracle.hpp"

using namespace bepsolve;

namespace {

Bifunction advantage_of(std::function<double(const Vector&)> g) {
  return from_objective(make_scalar_field(std::move(g)), Convention::Advantage);
}

}  // namespace

TEST_CASE("grid enumeration") {
  GridSpec g;
  g.lower = vec({0.0});
  g.upper = vec({1.0});
  g.step = 0.25;
  auto pts = grid_points(g);
  REQUIRE(pts.size() == 5);
  CHECK(pts[0][0] == 0.0);
  CHECK(pts[4][0] == doctest::Approx(1.0));

  // a degenerate axis still yields one point
  GridSpec s;
  s.lower = vec({0.5, 0.0});
  s.upper = vec({0.5, 0.5});
  s.step = 0.5;
  auto spts = grid_points(s);
  REQUIRE(spts.size() == 2);
  CHECK(spts[0][0] == 0.5);

  // the budget guard names a workable step
  GridSpec big;
  big.lower = vec({0.0, 0.0, 0.0});
  big.upper = vec({1.0, 1.0, 1.0});
  big.step = 1e-4;
  CHECK_THROWS_WITH_AS(static_cast<void>(big.point_count()),
                       doctest::Contains("increase step"),
                       std::invalid_argument);
}

TEST_CASE("scalar advantage objective has its minimizer as equilibrium") {
  auto f = advantage_of([](const Vector& x) { return x[0] * x[0]; });
  auto K = FeasibleSet::box(vec({-1.0}), vec({1.0}));
  auto scan = brute_force_ep(f, K, GridSpec::from_set(K, 0.5), 1e-9);
  CHECK(scan.lattice == 5);
  CHECK(scan.candidates == 5);
  REQUIRE(scan.equilibria.size() == 1);
  CHECK(scan.equilibria[0][0] == doctest::Approx(0.0));
}

TEST_CASE("lower-level scan recovers the flat valley of a quadratic") {
  // g(x) = (x1 + x2)^2 is minimized on the line x1 + x2 = 0; with an
  // explicit tolerance 1e-4 every accepted point is within 0.01 of it
  auto f = advantage_of([](const Vector& x) {
    const double s = x[0] + x[1];
    return s * s;
  });
  auto K = FeasibleSet::box(vec({-2.0, -2.0}), vec({2.0, 2.0}));
  auto scan = brute_force_ep(f, K, GridSpec::from_set(K, 0.05), 1e-4);
  CHECK(scan.lattice == 81 * 81);
  CHECK(scan.equilibria.size() > 50);
  for (const auto& u : scan.equilibria)
    CHECK(std::abs(u[0] + u[1]) / std::sqrt(2.0) <= 0.01);

  SUBCASE("solutions that survive refinement stay solutions") {
    auto fine = brute_force_ep(f, K, GridSpec::from_set(K, 0.025), 1e-4);
    for (const auto& u : fine.equilibria) {
      const bool on_coarse_lattice =
          std::abs(std::remainder(u[0], 0.05)) < 1e-9 &&
          std::abs(std::remainder(u[1], 0.05)) < 1e-9;
      if (!on_coarse_lattice) continue;
      bool found = false;
      for (const auto& v : scan.equilibria)
        if ((u - v).norm() < 1e-9) found = true;
      CHECK(found);
    }
  }
}

TEST_CASE("bilevel scan selects within the lower-level set") {
  auto f = advantage_of([](const Vector& x) {
    const double s = x[0] + x[1];
    return s * s;
  });
  auto h = advantage_of([](const Vector& x) {
    return (x[0] - 0.5) * (x[0] - 0.5) + (x[1] + 0.5) * (x[1] + 0.5);
  });
  auto K = FeasibleSet::box(vec({-2.0, -2.0}), vec({2.0, 2.0}));
  auto scan = brute_force_bep(f, h, K, GridSpec::from_set(K, 0.05), 1e-4, 0.01);
  CHECK(scan.inner_solutions > 50);
  REQUIRE(!scan.equilibria.empty());
  bool exact_hit = false;
  for (const auto& u : scan.equilibria) {
    CHECK((u - vec({0.5, -0.5})).norm() <= 0.15);
    if ((u - vec({0.5, -0.5})).norm() <= 1e-12) exact_hit = true;
  }
  CHECK(exact_hit);

  SUBCASE("a trivial upper level reduces to the lower-level scan") {
    auto zero = advantage_of([](const Vector&) { return 0.0; });
    auto both = brute_force_bep(f, zero, K, GridSpec::from_set(K, 0.1), 1e-4, 1e-9);
    auto inner = brute_force_ep(f, K, GridSpec::from_set(K, 0.1), 1e-4);
    REQUIRE(both.equilibria.size() == inner.equilibria.size());
    for (std::size_t i = 0; i < both.equilibria.size(); ++i)
      CHECK((both.equilibria[i] - inner.equilibria[i]).norm() == 0.0);
  }
}

TEST_CASE("an empty lower level is reported with the best residual") {
  // a rotation about (1.4, 1.4): its only equilibrium is the center itself,
  // which this lattice misses
  auto rot = from_operator(
      [](const Vector& x) { return vec({-(x[1] - 1.4), x[0] - 1.4}); },
      "rotation");
  auto K = FeasibleSet::box(vec({1.0, 1.0}), vec({2.0, 2.0}));
  auto h = advantage_of([](const Vector&) { return 0.0; });
  CHECK_THROWS_WITH_AS(
      brute_force_bep(rot, h, K, GridSpec::from_set(K, 0.25), 1e-6, 1e-6),
      doctest::Contains("best residual"), std::runtime_error);
}

TEST_CASE("scans are deterministic") {
  auto f = advantage_of([](const Vector& x) {
    return std::sin(3.0 * x[0]) + x[1] * x[1];
  });
  auto K = FeasibleSet::box(vec({-1.0, -1.0}), vec({1.0, 1.0}));
  auto a = brute_force_ep(f, K, GridSpec::from_set(K, 0.1));
  auto b = brute_force_ep(f, K, GridSpec::from_set(K, 0.1));
  CHECK(a.tol == b.tol);
  REQUIRE(a.equilibria.size() == b.equilibria.size());
  for (std::size_t i = 0; i < a.equilibria.size(); ++i)
    CHECK((a.equilibria[i] - b.equilibria[i]).norm() == 0.0);
}

TEST_CASE("lipschitz estimate has the right scale") {
  // |f(x,y)| = |y1^2 - x1^2| on [-1,1]: the slope never exceeds 2
  auto f = advantage_of([](const Vector& x) { return x[0] * x[0]; });
  auto K = FeasibleSet::box(vec({-1.0}), vec({1.0}));
  const double L = lipschitz_estimate(f, K, 400, 2);
  CHECK(L > 0.5);
  CHECK(L <= 2.0 + 1e-6);
}
