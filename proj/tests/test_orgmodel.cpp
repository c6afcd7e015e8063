#include <cmath>
#include <stdexcept>
#include <vector>

#include "bepsolve/bilevel.hpp"
#include "bepsolve/orgmodel.hpp"
#include "doctest.h"

using namespace bepsolve;

TEST_CASE("demo organization payoffs match hand arithmetic") {
  const Organization org = demo_organization();

  CHECK(leader_payoff(org, vec({0.0, 0.0})) == 0.0);
  CHECK(leader_payoff(org, vec({0.5, 0.5})) == 0.0);  // 2*1 - 1 - 2*0.5
  CHECK(leader_payoff(org, vec({1.0, 0.0})) == 1.0);  // 2*1 - 1 - 0

  CHECK(followers_payoff(org, vec({0.0, 0.0})) == 0.0);
  CHECK(followers_payoff(org, vec({0.3, 0.5})) == 0.5);  // 2*0.5 - 2*0.25
  CHECK(followers_payoff(org, vec({0.7, 1.0})) == 0.0);  // 2 - 2

  SUBCASE("feasibility gate") {
    CHECK_THROWS_AS(leader_payoff(org, vec({1.5, 0.0})), std::invalid_argument);
    CHECK_THROWS_AS(followers_payoff(org, vec({-0.2, 0.5})),
                    std::invalid_argument);
    CHECK_THROWS_AS(leader_payoff(org, vec({0.5, 0.5, 0.5})),
                    std::invalid_argument);
  }

  SUBCASE("leader weight variants are copies") {
    const Organization heavier = with_leader_weight(org, 4.0);
    CHECK(heavier.leader_weight == 4.0);
    CHECK(org.leader_weight == 1.0);
    CHECK(leader_payoff(heavier, vec({1.0, 0.0})) == 1.0);
    CHECK_THROWS_AS(with_leader_weight(org, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(with_leader_weight(org, -1.0), std::invalid_argument);
  }

  SUBCASE("follower slices") {
    Organization wide = org;
    wide.n_tasks = 2;
    wide.n_followers = 2;
    const Vector x = vec({1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
    CHECK((wide.follower_slice(x, 0) - vec({3.0, 4.0})).norm() == 0.0);
    CHECK((wide.follower_slice(x, 1) - vec({5.0, 6.0})).norm() == 0.0);
    CHECK_THROWS_AS(wide.follower_slice(x, 2), std::invalid_argument);
  }
}

TEST_CASE("organization validation rejects inconsistent instances") {
  const ProximalPair pair = build_euclidean_pair();

  SUBCASE("wage list size") {
    Organization org = demo_organization();
    org.wages.clear();
    CHECK_THROWS_WITH_AS(build_bep(org), doctest::Contains("one wage"),
                         std::invalid_argument);
  }
  SUBCASE("negative disutility is caught by sampling") {
    Organization org = demo_organization();
    org.disutilities[0] = [](const Vector& xj) { return -xj[0]; };
    CHECK_THROWS_WITH_AS(build_bep(org), doctest::Contains("negative"),
                         std::invalid_argument);
  }
  SUBCASE("effort bounds shape") {
    Organization org = demo_organization();
    org.effort_bounds = FeasibleSet::box(vec({0.0}), vec({1.0}));
    CHECK_THROWS_WITH_AS(build_bep(org), doctest::Contains("dimension"),
                         std::invalid_argument);
    org.effort_bounds = FeasibleSet::simplex(2, 1.0);
    CHECK_THROWS_WITH_AS(build_bep(org), doctest::Contains("box"),
                         std::invalid_argument);
    org.effort_bounds = FeasibleSet::box(vec({-0.5, 0.0}), vec({1.0, 1.0}));
    CHECK_THROWS_WITH_AS(build_bep(org), doctest::Contains("nonnegative"),
                         std::invalid_argument);
  }
  SUBCASE("weight must be positive") {
    Organization org = demo_organization();
    org.leader_weight = 0.0;
    CHECK_THROWS_AS(leader_payoff(org, vec({0.5, 0.5})), std::invalid_argument);
    CHECK_THROWS_AS(detect_traps(org, vec({0.5, 0.5}), 1.0, pair,
                                 GridSpec::from_set(
                                     demo_organization().effort_bounds, 0.5)),
                    std::invalid_argument);
  }
}

TEST_CASE("demo bilevel instance: losses over the effort box") {
  const Organization org = demo_organization();
  const auto bep = build_bep(org);

  CHECK(bep.K.kind() == SetKind::Box);
  CHECK(bep.K.dimension() == 2);
  CHECK(bep.f.difference_objective.has_value());
  CHECK(bep.h.difference_objective.has_value());

  const Vector a = vec({1.0, 0.0}), b = vec({0.0, 0.0}), c = vec({0.25, 0.5});
  CHECK(bep.f.eval(a, b) == 1.0);  // g_l(1,0) - g_l(0,0)
  CHECK(bep.f.eval(a, a) == 0.0);
  CHECK(bep.f.eval(a, c) + bep.f.eval(c, a) == 0.0);
  CHECK(bep.h.eval(c, b) == 0.5);  // g_J at follower 0.5 versus idle

  // both payoffs are concave, so the losses pass the standing assumptions
  const LReport lf = verify_standard_assumptions(bep.f, bep.K, 120, 3);
  const LReport lh = verify_standard_assumptions(bep.h, bep.K, 120, 3);
  CHECK(lf.all_ok());
  CHECK(lh.all_ok());

  SUBCASE("the wage term pins the leader's argmax to a single profile") {
    const GridSpec grid = GridSpec::from_set(bep.K, 0.01);
    // nearest competitor on the lattice sits 1e-4 below the optimum, so a
    // cutoff of 1e-5 separates cleanly
    const auto scan = brute_force_ep(bep.f, bep.K, grid, 1e-5);
    REQUIRE(scan.equilibria.size() == 1);
    CHECK((scan.equilibria[0] - vec({1.0, 0.0})).lpNorm<Eigen::Infinity>() ==
          0.0);

    const auto bscan = brute_force_bep(bep.f, bep.h, bep.K, grid, 1e-5, 1e-5);
    REQUIRE(bscan.equilibria.size() == 1);
    CHECK(bscan.inner_solutions == 1);
    CHECK((bscan.equilibria[0] - vec({1.0, 0.0})).lpNorm<Eigen::Infinity>() ==
          0.0);
  }
}

TEST_CASE("worthwhile-change quantities on the demo organization") {
  const Organization org = demo_organization();
  const ProximalPair pair = build_euclidean_pair();

  SUBCASE("zero displacement and self anchoring") {
    const Vector x = vec({0.4, 0.3});
    const VRQuantities same = worthwhile_delta(org, x, x, 1.0, pair, x);
    CHECK(same.A_e == 0.0);
    CHECK(same.I_e == 0.0);
    CHECK(same.Delta == 0.0);
    const VRQuantities anywhere =
        worthwhile_delta(org, x, vec({0.9, 0.1}), 2.5, pair, x);
    CHECK(anywhere.I_e == 0.0);  // grad1 d(x, x) = 0
  }

  SUBCASE("hand value: reaching the leader optimum from idle") {
    const VRQuantities q = worthwhile_delta(org, vec({0.0, 0.0}),
                                            vec({1.0, 0.0}), 1.0, pair,
                                            vec({0.0, 0.0}));
    CHECK(q.A_e == 1.0);
    CHECK(q.I_e == 0.0);
    CHECK(q.Delta == 1.0);
    CHECK(q.xi == 1.0);
    CHECK(q.costs_to_stay == 0.0);
  }

  SUBCASE("decomposition and the regularized bifunction line up") {
    const Organization weighted = with_leader_weight(org, 2.25);
    const auto bep = build_bep(weighted);
    const double lambda = 0.8;
    const double xi = 1.0 / lambda;
    const Vector anchor = vec({0.35, 0.45});
    const Bifunction reg =
        regularize(bep.f, bep.h, weighted.leader_weight, lambda, pair, anchor);

    std::mt19937_64 rng(11);
    for (int t = 0; t < 40; ++t) {
      const Vector x = bep.K.sample_interior(rng);
      const Vector y = bep.K.sample_interior(rng);
      const VRQuantities q = worthwhile_delta(weighted, x, y, xi, pair, anchor);
      CHECK(q.Delta == q.A_e - xi * q.I_e);
      CHECK(std::abs(reg.eval(x, y) + q.Delta) <= 1e-14);
      const double adv_leader = -bep.f.eval(x, y);
      const double adv_team = -bep.h.eval(x, y);
      CHECK(std::abs(weighted.leader_weight * adv_leader + adv_team - q.A_e) <=
            1e-14);
    }
  }

  SUBCASE("input guards") {
    CHECK_THROWS_AS(worthwhile_delta(org, vec({2.0, 0.0}), vec({0.0, 0.0}),
                                     1.0, pair, vec({0.0, 0.0})),
                    std::invalid_argument);
    CHECK_THROWS_AS(worthwhile_delta(org, vec({0.5, 0.5}), vec({0.5, 0.5}),
                                     0.0, pair, vec({0.0, 0.0})),
                    std::invalid_argument);
    const ProximalPair kl = build_bregman_pair(entropy_generator());
    CHECK_THROWS_WITH_AS(worthwhile_delta(org, vec({0.5, 0.5}),
                                          vec({0.6, 0.5}), 1.0, kl,
                                          vec({0.0, 0.5})),
                         doctest::Contains("anchor"), std::invalid_argument);
    const VRQuantities fine = worthwhile_delta(org, vec({0.5, 0.5}),
                                               vec({0.6, 0.5}), 1.0, kl,
                                               vec({0.2, 0.4}));
    CHECK(fine.Delta == fine.A_e - 1.0 * fine.I_e);
  }
}

TEST_CASE("trap detection on the demo organization") {
  const Organization org = demo_organization();
  const ProximalPair pair = build_euclidean_pair();
  const auto bep = build_bep(org);
  const GridSpec grid = GridSpec::from_set(bep.K, 0.01);
  const Vector star = vec({1.0, 0.0});

  SUBCASE("the leader optimum is a stationary trap") {
    const TrapReport rep = detect_traps(org, star, 1.0, pair, grid);
    CHECK(rep.stationary);
    CHECK(!rep.aspiration.has_value());
    CHECK(!rep.variational.has_value());
    CHECK(rep.scanned == 10200);  // 101^2 lattice points minus the candidate
    CHECK(rep.margin == doctest::Approx(-1e-4).epsilon(1e-6));
    REQUIRE(rep.witness.has_value());
    CHECK((*rep.witness - vec({0.99, 0.0})).lpNorm<Eigen::Infinity>() <= 1e-12);
  }

  SUBCASE("idle is not a trap and the witness says why") {
    const TrapReport rep = detect_traps(org, vec({0.0, 0.0}), 1.0, pair, grid);
    CHECK(!rep.stationary);
    CHECK(rep.margin == doctest::Approx(1.0));
    REQUIRE(rep.witness.has_value());
    CHECK((*rep.witness - star).lpNorm<Eigen::Infinity>() == 0.0);
  }

  SUBCASE("a pinned-down organization is trivially stationary") {
    Organization pinned = demo_organization();
    pinned.effort_bounds = FeasibleSet::box(vec({0.5, 0.5}), vec({0.5, 0.5}));
    const GridSpec tiny = GridSpec::from_set(pinned.effort_bounds, 0.01);
    const TrapReport rep =
        detect_traps(pinned, vec({0.5, 0.5}), 1.0, pair, tiny);
    CHECK(rep.stationary);
    CHECK(rep.scanned == 0);
    CHECK(!rep.witness.has_value());
    CHECK(std::isinf(rep.margin));
  }

  SUBCASE("a trace that would have to move downhill is no aspiration") {
    const std::vector<Vector> pts = {vec({0.5, 0.5})};
    const TrapReport rep =
        detect_traps(org, vec({0.0, 0.0}), 1.0, pair, grid, pts);
    REQUIRE(rep.aspiration.has_value());
    CHECK_FALSE(*rep.aspiration);
    CHECK(rep.k0 == -1);
    REQUIRE(rep.variational.has_value());
    CHECK_FALSE(*rep.variational);
  }

  SUBCASE("the solver endpoint is a variational trap along its own trace") {
    const Schedule sched = linear_eps_const_lambda(1.0, 1.0, 1.0);
    OuterOptions opts;
    opts.step_tol = 1e-8;
    const SolveReport run =
        solve_bep(bep.f, bep.h, bep.K, pair, sched, vec({0.0, 0.0}), opts);
    CHECK(run.termination == Termination::StoppedByCriterion);
    CHECK((run.final_point - star).lpNorm<Eigen::Infinity>() <= 1e-4);

    std::vector<Vector> pts;
    pts.reserve(run.trace.size());
    for (const auto& row : run.trace) pts.push_back(row.x);

    const TrapReport rep =
        detect_traps(org, run.final_point, 1.0, pair, grid, pts);
    CHECK(rep.stationary);
    REQUIRE(rep.aspiration.has_value());
    CHECK(*rep.aspiration);
    REQUIRE(rep.variational.has_value());
    CHECK(*rep.variational);
    CHECK(rep.k0 >= 0);
    CHECK(rep.k0 < static_cast<int>(pts.size()));

    // the worthwhile-change payoff is the negative of each regularized
    // subproblem, evaluated here along the accepted steps
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
      const double eps_k = run.trace[k + 1].eps_k;
      const double lam_k = run.trace[k + 1].lambda_k;
      const Bifunction sub =
          regularize(bep.f, bep.h, eps_k, lam_k, pair, pts[k]);
      const Organization at_k = with_leader_weight(org, eps_k);
      const VRQuantities q = worthwhile_delta(at_k, pts[k + 1], pts[k],
                                              1.0 / lam_k, pair, pts[k]);
      CHECK(std::abs(sub.eval(pts[k + 1], pts[k]) + q.Delta) <= 1e-12);
    }
  }

  SUBCASE("input guards") {
    CHECK_THROWS_AS(detect_traps(org, vec({1.5, 0.0}), 1.0, pair, grid),
                    std::invalid_argument);
    CHECK_THROWS_AS(detect_traps(org, star, -1.0, pair, grid),
                    std::invalid_argument);
    GridSpec short_grid = grid;
    short_grid.upper = vec({0.5, 1.0});
    CHECK_THROWS_WITH_AS(detect_traps(org, star, 1.0, pair, short_grid),
                         doctest::Contains("cover"), std::invalid_argument);
    const std::vector<Vector> bad_trace = {vec({0.5, 0.5, 0.5})};
    CHECK_THROWS_AS(detect_traps(org, star, 1.0, pair, grid, bad_trace),
                    std::invalid_argument);
  }

  SUBCASE("a restricted distance rejects boundary anchoring") {
    const ProximalPair kl = build_bregman_pair(entropy_generator());
    CHECK_THROWS_WITH_AS(detect_traps(org, star, 1.0, kl, grid),
                         doctest::Contains("anchor"), std::invalid_argument);
  }
}
