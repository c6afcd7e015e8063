#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "bepsolve/bifunctions.hpp"
#include "bepsolve/distances.hpp"
#include "bepsolve/geometry.hpp"
#include "bepsolve/oracle.hpp"
#include "bepsolve/types.hpp"

namespace bepsolve {

/// One leader and a team of followers working on n_tasks tasks.  An effort
/// profile stacks the leader's task efforts first and then one block per
/// follower, so profiles live in R^{n_tasks * (1 + n_followers)}.
///
/// Organization values are treated as immutable: every operation takes them
/// by const reference and variants are made by copy (with_leader_weight).
/// Grid scans can therefore share one instance as read-only state.
struct Organization {
  int n_tasks = 1;
  int n_followers = 1;

  /// Revenue phi(quantity, quality) of the produced output.
  std::function<double(double, double)> revenue;

  /// Effort profile -> (quantity, quality).
  std::function<std::pair<double, double>(const Vector&)> production;

  /// Cost of the means the leader mobilizes for a profile.
  std::function<double(const Vector&)> means_cost;

  /// Wage of follower j as a function of the whole profile.
  std::vector<std::function<double(const Vector&)>> wages;

  /// Disutility of follower j as a function of that follower's own block.
  /// Nonnegative on the effort box (spot-checked by build_bep).
  std::vector<std::function<double(const Vector&)>> disutilities;

  /// Weight of the leader's loss inside the joint advantage to change.
  double leader_weight = 1.0;

  /// Box of admissible effort profiles, nonnegative per coordinate.
  FeasibleSet effort_bounds;

  int profile_dim() const { return n_tasks * (1 + n_followers); }

  /// Block of follower j (0-based) inside a stacked profile.
  Vector follower_slice(const Vector& x, int j) const;
};

/// Copy of org with a different leader weight.
Organization with_leader_weight(const Organization& org, double eps);

/// One leader, one follower, one task each: q = x_l + x_1 with revenue
/// 2q - q^2 at fixed quality, no means cost, wage 2 x_1, disutility
/// 2 x_1^2, efforts in [0,1]^2.  Small enough that everything about it is
/// checkable by hand or by the grid oracle.
Organization demo_organization();

/// Revenue minus means cost minus the wage bill.  Throws
/// std::invalid_argument when x is outside the effort bounds.
double leader_payoff(const Organization& org, const Vector& x);

/// Sum over followers of wage minus own-effort disutility.  Same
/// feasibility gate as leader_payoff.
double followers_payoff(const Organization& org, const Vector& x);

/// The organization's bilevel equilibrium problem, both levels under the
/// loss-to-change convention: f(x, y) = g_l(x) - g_l(y) for the leader,
/// h(x, y) = g_J(x) - g_J(y) for the followers, over the effort box.  The
/// lower level collects the profiles maximizing the leader's payoff and the
/// upper level selects among them the ones the followers prefer.
///
/// The closures evaluate the raw payoff formulas without the feasibility
/// gate of leader_payoff, so finite-difference gradients may probe slightly
/// beyond the box; callbacks should tolerate such excursions.
struct OrganizationBEP {
  Bifunction f;
  Bifunction h;
  FeasibleSet K;
};

OrganizationBEP build_bep(const Organization& org);

/// Worthwhile-change bookkeeping for a move from x to y given the
/// experience anchor:
///
///   A_e   = -(eps f(x, y) + h(x, y))       weighted advantage to change
///   I_e   = <grad1 d(x, anchor), y - x>    inconvenient to change
///   Delta = A_e - xi I_e                   worthwhile-to-change payoff
///
/// with eps the organization's leader weight.  The grouping mirrors the
/// regularized bifunction, so -fbar(x, y) agrees with Delta to machine
/// precision whenever eps, xi = 1/lambda and the anchor match.  The cost to
/// be able to stay is left free by the model and cancels out of the
/// inconvenient; the field records the scalar (zero) only to make that
/// exclusion explicit.
struct VRQuantities {
  double A_e = 0.0;
  double I_e = 0.0;
  double Delta = 0.0;  // always computed as A_e - xi * I_e
  double xi = 1.0;
  double costs_to_stay = 0.0;
};

/// Preconditions: x and y inside the effort bounds, xi positive, anchor a
/// differentiability point of d(., anchor) (std::invalid_argument when the
/// anchor sits on the boundary of a restricted proximal domain).
VRQuantities worthwhile_delta(const Organization& org, const Vector& x,
                              const Vector& y, double xi,
                              const ProximalPair& pair, const Vector& anchor);

/// Grid verdict on a candidate profile.
///
///  - stationary: no lattice point y != candidate is worthwhile to move to
///    when the candidate anchors itself, checked as Delta <= 1e-9; margin
///    holds the largest Delta seen and witness the point attaining it.
///  - aspiration: given a trace, from index k0 on, moving straight from the
///    trace point to the candidate stays worthwhile (Delta >= -1e-9), each
///    point anchored at its predecessor and the start at itself.
///  - variational: both at once.
///
/// aspiration and variational stay empty when the trace is absent (an empty
/// list counts as absent).
struct TrapReport {
  bool stationary = false;
  std::optional<bool> aspiration;
  std::optional<bool> variational;
  double margin = 0.0;           // -inf when the scan saw no competitor
  std::optional<Vector> witness;
  int k0 = -1;                   // earliest index the aspiration check holds from
  std::size_t scanned = 0;       // lattice points entering the stationary scan
};

TrapReport detect_traps(const Organization& org, const Vector& candidate,
                        double xi, const ProximalPair& pair,
                        const GridSpec& grid,
                        const std::optional<std::vector<Vector>>& trace =
                            std::nullopt);

}  // namespace bepsolve
