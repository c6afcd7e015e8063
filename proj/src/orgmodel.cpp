#include "bepsolve/orgmodel.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace bepsolve {

namespace {

constexpr double kFeasTol = 1e-7;  // slack for "inside the effort box"
constexpr double kTrapTol = 1e-9;  // strict inequalities relaxed on a grid

void check_structure(const Organization& org) {
  if (org.n_tasks < 1 || org.n_followers < 1)
    throw std::invalid_argument(
        "organization: need at least one task and one follower");
  if (!org.revenue || !org.production || !org.means_cost)
    throw std::invalid_argument(
        "organization: revenue, production and means_cost are required");
  if (static_cast<int>(org.wages.size()) != org.n_followers ||
      static_cast<int>(org.disutilities.size()) != org.n_followers)
    throw std::invalid_argument(
        "organization: need one wage and one disutility per follower");
  for (const auto& w : org.wages)
    if (!w) throw std::invalid_argument("organization: missing wage callback");
  for (const auto& d : org.disutilities)
    if (!d)
      throw std::invalid_argument("organization: missing disutility callback");
  if (!(org.leader_weight > 0.0) || !std::isfinite(org.leader_weight))
    throw std::invalid_argument("organization: leader_weight must be positive");
  if (org.effort_bounds.kind() != SetKind::Box)
    throw std::invalid_argument("organization: effort_bounds must be a box");
  if (org.effort_bounds.dimension() != org.profile_dim())
    throw std::invalid_argument(
        "organization: effort_bounds dimension must be n_tasks * (1 + "
        "n_followers)");
  if (org.effort_bounds.box_lower().minCoeff() < 0.0)
    throw std::invalid_argument("organization: efforts must be nonnegative");
}

void check_profile(const Organization& org, const Vector& x, const char* who) {
  if (x.size() != org.profile_dim())
    throw std::invalid_argument(std::string(who) +
                                ": profile has the wrong dimension");
  if (!all_finite(x))
    throw std::invalid_argument(std::string(who) +
                                ": profile has non-finite entries");
  if (!org.effort_bounds.contains(x, kFeasTol))
    throw std::invalid_argument(std::string(who) +
                                ": profile outside the effort bounds");
}

// Raw evaluators without the feasibility gate; the bifunction closures and
// their finite-difference gradients go through these.
double leader_value(const Organization& org, const Vector& x) {
  const auto [quantity, quality] = org.production(x);
  double bill = 0.0;
  for (const auto& w : org.wages) bill += w(x);
  return org.revenue(quantity, quality) - org.means_cost(x) - bill;
}

double followers_value(const Organization& org, const Vector& x) {
  double total = 0.0;
  for (int j = 0; j < org.n_followers; ++j)
    total += org.wages[j](x) - org.disutilities[j](org.follower_slice(x, j));
  return total;
}

// Sampled counterpart of the type invariants; they live in callbacks, so
// construction cannot enforce them.  Samples the box directly so that
// degenerate (pinned) effort bounds are still checkable.
void spot_check(const Organization& org) {
  std::mt19937_64 rng(0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vector& lo = org.effort_bounds.box_lower();
  const Vector& hi = org.effort_bounds.box_upper();
  Vector x(lo.size());
  for (int t = 0; t < 16; ++t) {
    for (Eigen::Index i = 0; i < x.size(); ++i)
      x[i] = lo[i] + unit(rng) * (hi[i] - lo[i]);
    for (int j = 0; j < org.n_followers; ++j) {
      if (!std::isfinite(org.wages[j](x)))
        throw std::invalid_argument("organization: wage " + std::to_string(j) +
                                    " is not finite on the effort box");
      if (!(org.disutilities[j](org.follower_slice(x, j)) >= -1e-12))
        throw std::invalid_argument("organization: disutility " +
                                    std::to_string(j) +
                                    " is negative on the effort box");
    }
  }
}

// Grouped like the regularized bifunction (eps f + h) + xi <grad1, y - x>,
// so that -fbar recovers Delta to machine precision.
VRQuantities vr_quantities(const Bifunction& f, const Bifunction& h,
                           double eps, const Vector& x, const Vector& y,
                           double xi, const ProximalPair& pair,
                           const Vector& anchor) {
  VRQuantities out;
  out.xi = xi;
  out.A_e = -(eps * f.eval(x, y) + h.eval(x, y));
  out.I_e = pair.grad1(x, anchor).dot(y - x);
  out.Delta = out.A_e - xi * out.I_e;
  return out;
}

}  // namespace

Vector Organization::follower_slice(const Vector& x, int j) const {
  if (j < 0 || j >= n_followers)
    throw std::invalid_argument("organization: follower index out of range");
  if (x.size() != profile_dim())
    throw std::invalid_argument(
        "organization: profile has the wrong dimension");
  return x.segment(static_cast<Eigen::Index>(n_tasks) * (1 + j), n_tasks);
}

Organization with_leader_weight(const Organization& org, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps))
    throw std::invalid_argument("with_leader_weight: eps must be positive");
  Organization out = org;
  out.leader_weight = eps;
  return out;
}

Organization demo_organization() {
  return Organization{
      .n_tasks = 1,
      .n_followers = 1,
      .revenue = [](double q, double) { return 2.0 * q - q * q; },
      .production =
          [](const Vector& x) {
            return std::pair<double, double>(x[0] + x[1], 1.0);
          },
      .means_cost = [](const Vector&) { return 0.0; },
      .wages = {[](const Vector& x) { return 2.0 * x[1]; }},
      .disutilities = {[](const Vector& xj) { return 2.0 * xj[0] * xj[0]; }},
      .leader_weight = 1.0,
      .effort_bounds = FeasibleSet::box(vec({0.0, 0.0}), vec({1.0, 1.0})),
  };
}

double leader_payoff(const Organization& org, const Vector& x) {
  check_structure(org);
  check_profile(org, x, "leader_payoff");
  return leader_value(org, x);
}

double followers_payoff(const Organization& org, const Vector& x) {
  check_structure(org);
  check_profile(org, x, "followers_payoff");
  return followers_value(org, x);
}

OrganizationBEP build_bep(const Organization& org) {
  check_structure(org);
  spot_check(org);
  const Organization o = org;  // the closures own an immutable copy
  auto gl =
      make_scalar_field([o](const Vector& x) { return leader_value(o, x); });
  auto gj = make_scalar_field(
      [o](const Vector& x) { return followers_value(o, x); });
  return OrganizationBEP{
      from_objective(std::move(gl), Convention::Loss, "leader_loss"),
      from_objective(std::move(gj), Convention::Loss, "followers_loss"),
      org.effort_bounds};
}

VRQuantities worthwhile_delta(const Organization& org, const Vector& x,
                              const Vector& y, double xi,
                              const ProximalPair& pair, const Vector& anchor) {
  if (!(xi > 0.0) || !std::isfinite(xi))
    throw std::invalid_argument("worthwhile_delta: xi must be positive");
  check_structure(org);
  check_profile(org, x, "worthwhile_delta");
  check_profile(org, y, "worthwhile_delta");
  if (anchor.size() != x.size() || !all_finite(anchor))
    throw std::invalid_argument("worthwhile_delta: bad anchor");
  if (!pair.anchor_ok(anchor))
    throw std::invalid_argument(
        "worthwhile_delta: anchor on the boundary of the proximal domain");
  const OrganizationBEP bep = build_bep(org);
  return vr_quantities(bep.f, bep.h, org.leader_weight, x, y, xi, pair,
                       anchor);
}

TrapReport detect_traps(const Organization& org, const Vector& candidate,
                        double xi, const ProximalPair& pair,
                        const GridSpec& grid,
                        const std::optional<std::vector<Vector>>& trace) {
  if (!(xi > 0.0) || !std::isfinite(xi))
    throw std::invalid_argument("detect_traps: xi must be positive");
  check_structure(org);
  check_profile(org, candidate, "detect_traps");
  if (!pair.anchor_ok(candidate))
    throw std::invalid_argument(
        "detect_traps: candidate cannot anchor itself under this distance");

  const auto [lo, hi] = org.effort_bounds.bounding_box();
  if (grid.lower.size() != lo.size())
    throw std::invalid_argument("detect_traps: grid dimension mismatch");
  for (Eigen::Index i = 0; i < lo.size(); ++i)
    if (grid.lower[i] > lo[i] + grid.step || grid.upper[i] < hi[i] - grid.step)
      throw std::invalid_argument(
          "detect_traps: grid does not cover the effort bounds");

  const OrganizationBEP bep = build_bep(org);
  const double eps = org.leader_weight;

  TrapReport rep;
  rep.margin = -std::numeric_limits<double>::infinity();

  // Stationary scan.  Everything it touches is read-only, so the lattice
  // could be chunked across threads; the sizes involved do not warrant it.
  const double mtol = membership_tol(org.effort_bounds, grid);
  for (const auto& y : grid_points(grid)) {
    if (!org.effort_bounds.contains(y, mtol)) continue;
    if ((y - candidate).lpNorm<Eigen::Infinity>() == 0.0) continue;
    const VRQuantities q =
        vr_quantities(bep.f, bep.h, eps, candidate, y, xi, pair, candidate);
    ++rep.scanned;
    if (q.Delta > rep.margin) {
      rep.margin = q.Delta;
      rep.witness = y;
    }
  }
  rep.stationary = rep.margin <= kTrapTol;

  if (trace && !trace->empty()) {
    const auto& pts = *trace;
    std::vector<char> ok(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (pts[k].size() != candidate.size())
        throw std::invalid_argument(
            "detect_traps: trace point has the wrong dimension");
      const Vector& anchor = pts[k == 0 ? 0 : k - 1];
      if (!pair.anchor_ok(anchor))
        throw std::invalid_argument(
            "detect_traps: trace point " + std::to_string(k == 0 ? 0 : k - 1) +
            " cannot serve as an experience anchor under this distance");
      const VRQuantities q = vr_quantities(bep.f, bep.h, eps, pts[k],
                                           candidate, xi, pair, anchor);
      ok[k] = (q.Delta >= -kTrapTol) ? 1 : 0;
    }
    // earliest index from which the whole tail passes
    int k0 = static_cast<int>(pts.size());
    while (k0 > 0 && ok[k0 - 1]) --k0;
    if (k0 < static_cast<int>(pts.size())) {
      rep.aspiration = true;
      rep.k0 = k0;
    } else {
      rep.aspiration = false;
      rep.k0 = -1;
    }
    rep.variational = rep.stationary && *rep.aspiration;
  }

  return rep;
}

}  // namespace bepsolve
