#include "bepsolve/bilevel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace bepsolve {

namespace {

double checked_eval(const std::function<double(int)>& fn, int k, const char* what) {
  const double v = fn(k);
  if (!std::isfinite(v) || v <= 0.0) {
    std::ostringstream os;
    os << "schedule: " << what << "(" << k << ") = " << v
       << " is not positive and finite";
    throw std::invalid_argument(os.str());
  }
  return v;
}

// Pull an iterate strictly inside the distance domain when a restricted pair
// would otherwise reject it as the next anchor.
Vector ensure_anchor(const ProximalPair& pair, const FeasibleSet& K, Vector x) {
  if (pair.anchor_ok(x)) return x;
  const Vector w = K.interior_witness();
  for (double beta = 1e-12; beta <= 1e-2; beta *= 10.0) {
    Vector cand = (1.0 - beta) * x + beta * w;
    if (pair.anchor_ok(cand)) return cand;
  }
  throw NumericalError("outer iterate left the proximal domain", x);
}

double reference_distance(const ProximalPair& pair, const Vector& z,
                          const Vector& x, const char* who) {
  const double v = pair.D(z, x);
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << who << ": distance to the reference point is not finite "
       << "(point outside the distance domain)";
    throw std::invalid_argument(os.str());
  }
  return v;
}

double inner_tolerance(double base, int k) {
  // summable refinement: the loop spends at most sum 1/(k+1)^2 of slack
  return std::min(base, 1.0 / ((k + 1.0) * (k + 1.0)));
}

}  // namespace

Schedule linear_eps_const_lambda(double eps0, double slope, double lambda0) {
  if (!(std::isfinite(eps0) && eps0 > 0.0) ||
      !(std::isfinite(slope) && slope >= 0.0) ||
      !(std::isfinite(lambda0) && lambda0 > 0.0))
    throw std::invalid_argument(
        "linear_eps_const_lambda: need eps0 > 0, slope >= 0, lambda0 > 0");
  Schedule s;
  s.eps = [eps0, slope](int k) { return eps0 + slope * k; };
  s.lambda = [lambda0](int) { return lambda0; };
  s.theta = lambda0;
  s.preset = "linear_eps_const_lambda";
  return s;
}

void validate_schedule(const Schedule& schedule) {
  if (!schedule.eps || !schedule.lambda)
    throw std::invalid_argument("schedule: missing eps or lambda callback");
  if (!(std::isfinite(schedule.theta) && schedule.theta > 0.0))
    throw std::invalid_argument("schedule: theta must be positive");

  double prev_eps = -std::numeric_limits<double>::infinity();
  double sum_head = 0.0;  // partial sum of lambda over the first 10^3 terms
  double sum_full = 0.0;  // ... and over the first 10^4
  auto check_at = [&](int k) {
    const double e = checked_eval(schedule.eps, k, "eps");
    const double l = checked_eval(schedule.lambda, k, "lambda");
    if (l < schedule.theta - 1e-12) {
      std::ostringstream os;
      os << "schedule: lambda(" << k << ") = " << l << " falls below theta = "
         << schedule.theta;
      throw std::invalid_argument(os.str());
    }
    if (e < prev_eps - 1e-12) {
      std::ostringstream os;
      os << "schedule: eps decreases at k = " << k;
      throw std::invalid_argument(os.str());
    }
    prev_eps = e;
    return l;
  };

  for (int k = 0; k < 10000; ++k) {
    const double l = check_at(k);
    sum_full += l;
    if (k < 1000) sum_head += l;
  }
  for (int k : {100000, 1000000}) check_at(k);

  // Divergence heuristic: for a summable series the partial sums go flat,
  // while every lambda >= theta > 0 already grows them linearly.  The ratio
  // test below accepts harmonic-like tails and rejects summable ones.
  if (!(sum_full >= 1.2 * sum_head)) {
    std::ostringstream os;
    os << "schedule: partial sums of lambda look bounded (" << sum_full
       << " over 10^4 terms vs " << sum_head
       << " over 10^3); the outer loop needs a divergent lambda series";
    throw std::invalid_argument(os.str());
  }
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::StoppedByCriterion: return "stopped_by_criterion";
    case Termination::StepTolerance: return "step_tolerance";
    case Termination::MaxOuter: return "max_outer";
    case Termination::NonConvergedInner: return "non_converged_inner";
  }
  return "unknown";
}

bool stopping_check(const Vector& x_prev, const Vector& x_next, const Bifunction& f,
                    const FeasibleSet& K, double tol,
                    const std::optional<ProbeSpec>& probe) {
  if (!std::isfinite(tol) || tol < 0.0)
    throw std::invalid_argument("stopping_check: tol must be nonnegative");
  if (x_prev.size() != x_next.size())
    throw std::invalid_argument("stopping_check: dimension mismatch");
  if ((x_next - x_prev).norm() > tol) return false;
  const double res = probe ? ep_residual(f, K, x_next, *probe)
                           : ep_residual(f, K, x_next);
  return res <= tol;
}

SolveReport solve_bep(const Bifunction& f, const Bifunction& h, const FeasibleSet& K,
                      const ProximalPair& pair, const Schedule& schedule,
                      const Vector& x0, const OuterOptions& opts) {
  if (x0.size() != K.dimension())
    throw std::invalid_argument("solve_bep: x0 dimension mismatch");
  if (!all_finite(x0))
    throw std::invalid_argument("solve_bep: x0 has non-finite coordinates");
  if (!K.contains(x0, 1e-9))
    throw std::invalid_argument("solve_bep: x0 not in feasible set");
  if (!schedule.eps || !schedule.lambda)
    throw std::invalid_argument("solve_bep: schedule is missing callbacks");
  if (opts.max_outer < 1)
    throw std::invalid_argument("solve_bep: max_outer must be at least 1");
  if (!std::isfinite(opts.step_tol) || opts.step_tol < 0.0)
    throw std::invalid_argument("solve_bep: step_tol must be nonnegative");
  if (opts.z_ref && opts.z_ref->size() != K.dimension())
    throw std::invalid_argument("solve_bep: z_ref dimension mismatch");

  Vector x = ensure_anchor(pair, K, x0);

  SolveReport report;
  auto dref = [&](const Vector& p) -> std::optional<double> {
    if (!opts.z_ref) return std::nullopt;
    return reference_distance(pair, *opts.z_ref, p, "solve_bep");
  };

  {
    TraceRow row0;
    row0.k = 0;
    row0.x = x;
    row0.D_to_reference = dref(x);
    report.trace.push_back(std::move(row0));
  }

  report.termination = Termination::MaxOuter;
  for (int k = 0; k < opts.max_outer; ++k) {
    const double eps = checked_eval(schedule.eps, k, "eps");
    const double lam = checked_eval(schedule.lambda, k, "lambda");

    const Bifunction sub = regularize(f, h, eps, lam, pair, x);
    InnerSolveOptions inner = opts.inner;
    inner.tol = inner_tolerance(opts.inner.tol, k);
    report.inner_tol_sum += inner.tol;

    InnerResult res = solve_ep(sub, K, x, inner, opts.probe);
    const Vector x_next = ensure_anchor(pair, K, std::move(res.x));
    const double step = (x_next - x).norm();

    TraceRow row;
    row.k = k + 1;
    row.x = x_next;
    row.eps_k = eps;
    row.lambda_k = lam;
    row.step_norm = step;
    row.inner_iterations = res.iterations;
    row.inner_residual = res.residual;
    row.D_to_reference = dref(x_next);
    report.trace.push_back(std::move(row));

    const Vector x_prev = x;
    x = x_next;

    if (!res.converged) {
      report.termination = Termination::NonConvergedInner;
      break;
    }
    if (step <= opts.step_tol) {
      report.termination =
          stopping_check(x_prev, x, f, K, opts.step_tol, opts.probe)
              ? Termination::StoppedByCriterion
              : Termination::StepTolerance;
      break;
    }
  }

  if (!all_finite(x)) throw NumericalError("solve_bep: final point is not finite", x);
  if (!K.contains(x, 1e-9))
    throw NumericalError("solve_bep: final point left the feasible set", x);
  report.final_point = x;

  if (opts.z_ref) {
    double slack = 0.0;
    for (std::size_t i = 0; i + 1 < report.trace.size(); ++i)
      slack += std::max(0.0, *report.trace[i + 1].D_to_reference -
                                 *report.trace[i].D_to_reference);
    report.fejer_slack_sum = slack;
  }
  return report;
}

FejerReport monitor_fejer(const std::vector<TraceRow>& trace, const Vector& z_ref,
                          const ProximalPair& pair, double budget) {
  if (trace.empty()) throw std::invalid_argument("monitor_fejer: empty trace");
  if (!all_finite(z_ref))
    throw std::invalid_argument("monitor_fejer: reference point not finite");
  if (!std::isfinite(budget) || budget < 0.0)
    throw std::invalid_argument("monitor_fejer: budget must be nonnegative");

  FejerReport rep;
  rep.budget = budget;
  rep.increments.reserve(trace.size() - 1);
  double prev = reference_distance(pair, z_ref, trace.front().x, "monitor_fejer");
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const double cur = reference_distance(pair, z_ref, trace[i].x, "monitor_fejer");
    const double inc = std::max(0.0, cur - prev);
    rep.increments.push_back(inc);
    rep.slack_sum += inc;
    prev = cur;
  }
  rep.is_quasi_fejer = rep.slack_sum <= budget;
  return rep;
}

FejerReport monitor_fejer(const SolveReport& report, const Vector& z_ref,
                          const ProximalPair& pair) {
  return monitor_fejer(report.trace, z_ref, pair,
                       1e-4 + 10.0 * report.inner_tol_sum);
}

DescentAudit audit_descent(const std::vector<TraceRow>& trace, const Vector& z,
                           const Bifunction& f, const ProximalPair& pair,
                           double inner_tol_base) {
  if (trace.empty()) throw std::invalid_argument("audit_descent: empty trace");
  if (!std::isfinite(inner_tol_base) || inner_tol_base < 0.0)
    throw std::invalid_argument("audit_descent: inner_tol_base must be nonnegative");

  DescentAudit audit;
  audit.violations.reserve(trace.size() - 1);
  audit.allowances.reserve(trace.size() - 1);
  double dz_prev = reference_distance(pair, z, trace.front().x, "audit_descent");
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const TraceRow& row = trace[i];
    const Vector& xp = trace[i - 1].x;
    const Vector& xn = row.x;
    const double dz_next = reference_distance(pair, z, xn, "audit_descent");
    const double lhs = dz_next + 0.5 * row.lambda_k * row.eps_k * f.eval(z, xn);
    const double rhs = dz_prev - pair.gamma * pair.D(xn, xp);
    const double v = lhs - rhs;
    const int k = row.k - 1;  // index of the step that produced this row
    audit.violations.push_back(v);
    audit.allowances.push_back(10.0 * inner_tolerance(inner_tol_base, k));
    if (v > audit.allowances.back()) audit.ok = false;
    if (audit.worst_k < 0 || v > audit.worst_violation) {
      audit.worst_violation = v;
      audit.worst_k = k;
    }
    dz_prev = dz_next;
  }
  return audit;
}

HypothesisEstimate estimate_hypothesis_H(const Bifunction& f, const FeasibleSet& K,
                                         const Vector& z, const Vector& q,
                                         const GridSpec& solution_grid) {
  const int n = K.dimension();
  if (n > 3)
    throw std::invalid_argument("estimate_hypothesis_H: dimension capped at 3");
  if (z.size() != n || q.size() != n)
    throw std::invalid_argument("estimate_hypothesis_H: dimension mismatch");
  if (!all_finite(z) || !all_finite(q))
    throw std::invalid_argument("estimate_hypothesis_H: non-finite input");
  if (!f.eval) throw std::invalid_argument("estimate_hypothesis_H: bifunction has no eval");

  const double mtol = membership_tol(K, solution_grid);
  std::vector<Vector> lattice;
  for (Vector& p : grid_points(solution_grid))
    if (K.contains(p, mtol)) lattice.push_back(std::move(p));
  if (lattice.empty())
    throw std::invalid_argument(
        "estimate_hypothesis_H: the grid misses the feasible set entirely");

  // Equilibrium residual of a point against the lattice.  Difference
  // bifunctions reduce to an objective gap; the generic path scans
  // counter-moves and may stop early once the point is disqualified.
  std::vector<double> res(lattice.size(), 0.0);
  double rz = 0.0;
  const bool difference = static_cast<bool>(f.difference_objective);
  if (difference) {
    const auto& G = *f.difference_objective;
    std::vector<double> g(lattice.size());
    double gmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < lattice.size(); ++i) {
      g[i] = G.value(lattice[i]);
      gmin = std::min(gmin, g[i]);
    }
    for (std::size_t i = 0; i < lattice.size(); ++i)
      res[i] = std::max(0.0, g[i] - gmin);
    rz = std::max(0.0, G.value(z) - gmin);
  } else {
    auto worst_drop = [&](const Vector& u, double stop_below) {
      double m = 0.0;  // tracks min(0, min_y f(u, y)); the residual clamps at 0 anyway
      for (const Vector& y : lattice) {
        m = std::min(m, f.eval(u, y));
        if (m < stop_below) break;
      }
      return m;
    };
    rz = std::max(0.0, -worst_drop(z, -std::numeric_limits<double>::infinity()));
  }

  const double pre_tol = 2.0 * lipschitz_estimate(f, K) * solution_grid.step + 1e-12;
  if (rz > pre_tol) {
    std::ostringstream os;
    os << "estimate_hypothesis_H: z is not an equilibrium at this grid resolution "
       << "(residual " << rz << " vs " << pre_tol << ")";
    throw std::invalid_argument(os.str());
  }
  const double tau = std::max(1e-12, 2.0 * rz);

  if (!difference) {
    for (std::size_t i = 0; i < lattice.size(); ++i) {
      auto worst_drop = [&](const Vector& u) {
        double m = 0.0;
        for (const Vector& y : lattice) {
          m = std::min(m, f.eval(u, y));
          if (m < -tau) break;  // already disqualified
        }
        return m;
      };
      res[i] = std::max(0.0, -worst_drop(lattice[i]));
    }
  }

  // Support of the lattice approximation of the solution set; z itself is
  // admitted, which pins the estimate at q = 0 to exactly zero.
  std::size_t members = 0;
  double support = q.dot(z);
  double best_res = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < lattice.size(); ++i) {
    best_res = std::min(best_res, res[i]);
    if (res[i] <= tau) {
      ++members;
      support = std::max(support, q.dot(lattice[i]));
    }
  }
  if (members == 0) {
    std::ostringstream os;
    os << "estimate_hypothesis_H: no lattice point qualifies as an approximate "
       << "equilibrium (smallest residual " << best_res << " vs threshold " << tau
       << "); refine the grid or relax the reference";
    throw std::runtime_error(os.str());
  }

  // Conjugate over a lattice inflated beyond K far enough to carry the
  // shifted maximizer y* = x* + q.
  auto [lo, hi] = K.bounding_box();
  const double inflate = q.norm() + 2.0 * solution_grid.step;
  GridSpec conj;
  conj.lower = lo.array() - inflate;
  conj.upper = hi.array() + inflate;
  conj.step = solution_grid.step;
  conj.max_points = solution_grid.max_points;
  double conjugate = q.dot(z) - f.eval(z, z);
  for (const Vector& y : grid_points(conj))
    conjugate = std::max(conjugate, q.dot(y) - f.eval(z, y));

  HypothesisEstimate out;
  out.conjugate = conjugate;
  out.support = support;
  out.value = conjugate - support;
  out.solution_points = members;
  out.threshold = tau;
  return out;
}

}  // namespace bepsolve
