#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bepsolve/bifunctions.hpp"
#include "bepsolve/distances.hpp"
#include "bepsolve/geometry.hpp"
#include "bepsolve/inner_solver.hpp"
#include "bepsolve/oracle.hpp"
#include "bepsolve/types.hpp"

namespace bepsolve {

// Outer-loop parameter schedule. eps(k) weights the lower-level bifunction in
// the k-th regularized subproblem, lambda(k) is the proximal step. theta is
// the positive floor the lambdas must respect.
struct Schedule {
  std::function<double(int)> eps;
  std::function<double(int)> lambda;
  double theta = 1.0;
  std::string preset = "custom";
};

// eps_k = eps0 + slope*k, lambda_k = lambda0, theta = lambda0.
Schedule linear_eps_const_lambda(double eps0, double slope, double lambda0);

// Sanity checks on a schedule: both callbacks finite and positive, lambda(k)
// bounded below by theta (spot-checked up to k = 10^6), eps nondecreasing on
// the checked range, and the partial sums of lambda growing without bound
// (divergence heuristic over the first 10^4 terms). Throws std::invalid_argument
// with the offending k in the message.
void validate_schedule(const Schedule& schedule);

// One outer iterate. Row k holds the iterate after k proximal steps together
// with the statistics of the step that produced it, so eps_k/lambda_k in row
// k+1 are schedule.eps(k)/schedule.lambda(k). Row 0 is the starting point with
// zero step statistics.
struct TraceRow {
  int k = 0;
  Vector x;
  double eps_k = 0.0;
  double lambda_k = 0.0;
  double step_norm = 0.0;
  int inner_iterations = 0;
  double inner_residual = 0.0;
  std::optional<double> D_to_reference;
};

enum class Termination {
  StoppedByCriterion,   // step norm and equilibrium residual both under tolerance
  StepTolerance,        // iterates stalled but the residual check did not clear
  MaxOuter,             // outer iteration budget exhausted
  NonConvergedInner,    // an inner solve missed its tolerance; loop halted
};

std::string to_string(Termination t);

struct SolveReport {
  std::vector<TraceRow> trace;   // length >= 1, row 0 is the starting point
  Termination termination = Termination::MaxOuter;
  Vector final_point;
  double inner_tol_sum = 0.0;    // sum of the per-iteration inner tolerances
  std::optional<double> fejer_slack_sum;  // filled when a reference point is given
};

struct OuterOptions {
  int max_outer = 500;
  double step_tol = 1e-8;
  InnerSolveOptions inner;            // inner.tol is the base inner tolerance
  std::optional<Vector> z_ref;        // reference point for the D_to_reference column
  std::optional<ProbeSpec> probe;     // residual probe; automatic(K) when absent
};

// True when the step from x_prev to x_next is at most tol and x_next is an
// approximate equilibrium of f over K at the same tolerance.
bool stopping_check(const Vector& x_prev, const Vector& x_next, const Bifunction& f,
                    const FeasibleSet& K, double tol,
                    const std::optional<ProbeSpec>& probe = std::nullopt);

// Proximal outer loop for the bilevel problem: x_{k+1} solves the equilibrium
// subproblem for regularize(f, h, eps_k, lambda_k, pair, x_k). The inner
// tolerance at iteration k is min(opts.inner.tol, 1/(k+1)^2), which keeps the
// accumulated inexactness summable. Preconditions: f and h satisfy the standard
// assumptions on K (see verify_standard_assumptions) and x0 lies in K; an
// infeasible x0 throws std::invalid_argument.
SolveReport solve_bep(const Bifunction& f, const Bifunction& h, const FeasibleSet& K,
                      const ProximalPair& pair, const Schedule& schedule, const Vector& x0,
                      const OuterOptions& opts = {});

// Quasi-Fejer audit of a trace: sums the positive increments of k -> D(z_ref, x_k).
// For a quasi-Fejer convergent run the slack stays within a budget driven by the
// accumulated inner tolerances.
struct FejerReport {
  std::vector<double> increments;  // max(0, D(z,x_{k+1}) - D(z,x_k)) per step
  double slack_sum = 0.0;
  double budget = 0.0;
  bool is_quasi_fejer = false;
};

FejerReport monitor_fejer(const std::vector<TraceRow>& trace, const Vector& z_ref,
                          const ProximalPair& pair, double budget);
// Budget defaulted to 1e-4 + 10 * report.inner_tol_sum.
FejerReport monitor_fejer(const SolveReport& report, const Vector& z_ref,
                          const ProximalPair& pair);

// Per-step descent inequality of the proximal recursion, audited against a
// fixed comparison point z:
//   D(z, x_{k+1}) + (lambda_k eps_k / 2) f(z, x_{k+1})
//     <= D(z, x_k) - gamma D(x_{k+1}, x_k) + slack,
// where the slack term vanishes for the zero normal-cone selection used here.
// violations[i] is LHS - RHS for trace step i (row i -> row i+1); the audit
// passes when every violation is at most 10x that step's inner tolerance.
struct DescentAudit {
  std::vector<double> violations;
  std::vector<double> allowances;
  bool ok = true;
  int worst_k = -1;
  double worst_violation = 0.0;
};

DescentAudit audit_descent(const std::vector<TraceRow>& trace, const Vector& z,
                           const Bifunction& f, const ProximalPair& pair,
                           double inner_tol_base);

// Grid estimate of the conjugate-minus-support quantity behind the summability
// hypothesis on the inner inexactness: value = f_z*(q) - sigma(q), where
// f_z*(q) = sup_y <q,y> - f(z,y) over a lattice inflated beyond K by |q| and
// sigma is the support function of the lattice approximation of S(f,K). The
// reference point z must be an approximate equilibrium at the grid resolution.
// Dimension is capped at 3; an empty lattice solution set raises a diagnostic
// error carrying the smallest residual found.
struct HypothesisEstimate {
  double value = 0.0;
  double conjugate = 0.0;        // f_z*(q)
  double support = 0.0;          // sigma over the approximate solution set
  std::size_t solution_points = 0;  // lattice points admitted into S(f,K)
  double threshold = 0.0;        // residual cutoff used for membership
};

HypothesisEstimate estimate_hypothesis_H(const Bifunction& f, const FeasibleSet& K,
                                         const Vector& z, const Vector& q,
                                         const GridSpec& solution_grid);

}  // namespace bepsolve
