#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bepsolve/bilevel.hpp"
#include "bepsolve/orgmodel.hpp"
#include "bepsolve/problems.hpp"

namespace bepsolve {

// Stderr logging, gated by the BEPSOLVE_LOG environment variable
// (quiet | info | trace; anything else, including unset, means info).
// Primary command output goes to stdout and is never gated.
enum class LogLevel { Quiet = 0, Info = 1, Trace = 2 };
LogLevel log_level();
void log_info(const std::string& line);
void log_trace(const std::string& line);

/// Inline quadratic problem: each level minimizes or maximizes
/// g(x) = 0.5 x'A x + b'x over a box, per its convention.
struct QuadraticSpec {
  int dim = 0;
  Vector lower, upper;
  std::vector<double> f_quad, h_quad;  // row-major n x n
  Vector f_linear, h_linear;
  Convention f_convention = Convention::Advantage;
  Convention h_convention = Convention::Advantage;
};

/// Inline organization with one task per agent: revenue phi(q) polynomial in
/// the total effort q, wage j and disutility j polynomials in follower j's
/// own effort.  Coefficient arrays are lowest degree first.
struct CustomOrgSpec {
  int followers = 1;
  std::vector<double> phi;
  std::vector<std::vector<double>> wage;
  std::vector<std::vector<double>> disutility;
  double leader_weight = 1.0;
  Vector lower, upper;
};

/// Declarative experiment description, straight from a config file.  The
/// schema is flat key = value lines with dotted keys, bracketed vectors and
/// # comments; see README for the full key list.
struct ExperimentConfig {
  std::string problem = "p2";          // p1 | p2 | quadratic | org.demo | org.custom
  std::string pair = "euclidean";      // euclidean | entropy
  std::string schedule_preset = "linear";
  double eps0 = 1.0;
  double eps_slope = 1.0;
  double lambda = 1.0;
  std::optional<Vector> x0;            // absent = "auto": the interior witness of K
  int max_outer = 500;
  double step_tol = 1e-8;
  InnerSolveOptions inner;
  std::optional<Vector> reference;     // z_ref for the D_ref column and the Fejer audit
  std::uint64_t seed = 0;
  std::string csv_path = "trace.csv";
  std::string json_path = "report.json";
  double report_grid_step = 0.01;      // 0 disables the oracle-backed report blocks
  std::optional<QuadraticSpec> quadratic;
  std::optional<CustomOrgSpec> custom_org;
};

/// Parse a config from text / from a file.  Unknown keys, duplicates and
/// malformed values raise std::invalid_argument with a single-line message.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// The config resolved into solver objects.  Construction validates the
/// combination: the preset must exist, dimensions must agree, x0 must lie in
/// the feasible set, and the entropy distance is rejected over boxes that
/// touch the closed negative orthant.
struct ExperimentSetup {
  Bifunction f;
  Bifunction h;
  FeasibleSet K;
  ProximalPair pair;
  Schedule schedule;
  Vector x0;
  OuterOptions outer;
  std::optional<Organization> org;   // set for the org presets (trap reporting)
  std::optional<Vector> solution_hint;
};

ExperimentSetup build_setup(const ExperimentConfig& cfg);

struct ExperimentResult {
  int exit_code = 0;                  // 0 done, 1 numerical failure
  std::string error;                  // single line, empty when exit_code == 0
  std::optional<SolveReport> report;
  std::string csv_path, json_path;    // resolved paths, empty when not written
};

/// Solve per the config and emit the CSV trace and JSON report.  Relative
/// output paths are resolved against out_dir when given (the directory is
/// created).  A run whose inner solver gives up, or that breaks down
/// numerically, still flushes whatever trace exists and reports exit code 1.
/// Identical config + seed produce byte-identical files.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::string& out_dir = "",
                                bool write_files = true);

/// CSV emitter used by run_experiment: header
///   k,eps_k,lambda_k,x_0..x_{n-1},step_norm,inner_iters,inner_residual,D_ref
/// then one row per trace entry, every number in round-trippable %.17g,
/// D_ref left blank when no reference point was set.
void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);

/// The JSON report as a string (serialized with a fixed key order, no
/// timestamps): termination, final point, residuals, the Fejer audit when a
/// reference is set, the hypothesis-(H) partial sums, and the trap checks
/// when the problem is an org preset.
std::string report_json(const ExperimentConfig& cfg, const ExperimentSetup& setup,
                        const SolveReport& report);

}  // namespace bepsolve
