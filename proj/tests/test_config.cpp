#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "bepsolve/experiment.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace bepsolve;
namespace fs = std::filesystem;

namespace {

const char* kP2Config = R"(
# planar valley problem, fully spelled out
problem = p2
pair = euclidean
schedule = linear
schedule.eps0 = 1
schedule.slope = 1
schedule.lambda = 1
x0 = [0, 0]
outer.max_outer = 120
outer.step_tol = 1e-8
inner.tol = 1e-8
reference = [0.5, -0.5]
seed = 42
out.csv = trace.csv        # resolved against --out-dir
out.json = report.json
report.grid_step = 0.05
)";

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream body;
  body << in.rdbuf();
  return body.str();
}

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << body;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config text parses into a typed experiment") {
  const ExperimentConfig cfg = parse_config(kP2Config);
  CHECK(cfg.problem == "p2");
  CHECK(cfg.pair == "euclidean");
  CHECK(cfg.schedule_preset == "linear");
  CHECK(cfg.eps0 == 1.0);
  CHECK(cfg.eps_slope == 1.0);
  CHECK(cfg.lambda == 1.0);
  REQUIRE(cfg.x0.has_value());
  CHECK(cfg.x0->size() == 2);
  CHECK((*cfg.x0 - vec({0.0, 0.0})).norm() == 0.0);
  CHECK(cfg.max_outer == 120);
  CHECK(cfg.step_tol == 1e-8);
  CHECK(cfg.inner.tol == 1e-8);
  REQUIRE(cfg.reference.has_value());
  CHECK((*cfg.reference - vec({0.5, -0.5})).norm() == 0.0);
  CHECK(cfg.seed == 42);
  CHECK(cfg.csv_path == "trace.csv");
  CHECK(cfg.json_path == "report.json");
  CHECK(cfg.report_grid_step == 0.05);

  SUBCASE("absent keys keep their defaults, x0 = auto stays unresolved") {
    const ExperimentConfig d = parse_config("problem = p1\nx0 = auto\n");
    CHECK(d.problem == "p1");
    CHECK(d.pair == "euclidean");
    CHECK(d.max_outer == 500);
    CHECK(d.inner.tol == 1e-8);
    CHECK(d.inner.mode == InnerMode::Auto);
    CHECK(!d.x0.has_value());
    CHECK(!d.reference.has_value());
    CHECK(d.seed == 0);
  }

  SUBCASE("inner mode names map to the solver enum") {
    CHECK(parse_config("inner.mode = objective\n").inner.mode ==
          InnerMode::ObjectiveFastPath);
    CHECK(parse_config("inner.mode = extragradient\n").inner.mode ==
          InnerMode::Extragradient);
  }
}

TEST_CASE("config errors carry single-line messages") {
  auto reject = [](const std::string& text, const std::string& fragment) {
    try {
      parse_config(text);
      FAIL_CHECK("accepted: " << text);
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find(fragment) != std::string::npos);
      CHECK(msg.find('\n') == std::string::npos);
    }
  };
  reject("problem\n", "key = value");
  reject("problem =\n", "empty value");
  reject("seed = 1\nseed = 2\n", "duplicate");
  reject("color = red\n", "unknown key 'color'");
  reject("x0 = [1, ]\n", "empty list entry");
  reject("x0 = [one]\n", "finite number");
  reject("x0 = 0.5\n", "bracketed list");
  reject("outer.max_outer = 0\n", "at least 1");
  reject("outer.max_outer = 2.5\n", "integer");
  reject("inner.tol = -1\n", "positive");
  reject("inner.mode = sideways\n", "inner.mode");
  reject("seed = -3\n", "nonnegative");
  reject("schedule.eps0 = 0\n", "positive");
  reject("schedule.slope = -1\n", "nonnegative");
  reject("quadratic.dim = 2\n", "only applies to problem = quadratic");
  reject("org.phi = [1]\n", "only applies to problem = org.custom");
  reject("problem = quadratic\n", "needs key 'quadratic.dim'");
  reject("problem = org.custom\n", "needs key 'org.phi'");
}

TEST_CASE("setup construction enforces the run invariants") {
  ExperimentConfig cfg = parse_config(kP2Config);

  SUBCASE("x0 = auto resolves to the interior witness") {
    cfg.x0.reset();
    const ExperimentSetup setup = build_setup(cfg);
    CHECK((setup.x0 - vec({0.0, 0.0})).norm() == 0.0);
    CHECK(setup.K.dimension() == 2);
    CHECK(setup.schedule.preset == "linear_eps_const_lambda");
    CHECK(setup.outer.max_outer == 120);
    REQUIRE(setup.outer.z_ref.has_value());
    REQUIRE(setup.solution_hint.has_value());
    CHECK(!setup.org.has_value());
  }

  SUBCASE("infeasible x0 is rejected with the exact message") {
    cfg.x0 = vec({2.0, 2.0});
    CHECK_THROWS_WITH_AS(build_setup(cfg), "x0 not in feasible set",
                         std::invalid_argument);
  }

  SUBCASE("dimension mismatches are named") {
    cfg.x0 = vec({0.0, 0.0, 0.0});
    CHECK_THROWS_WITH_AS(build_setup(cfg),
                         "config: x0 has dimension 3 but the problem has dimension 2",
                         std::invalid_argument);
    cfg = parse_config(kP2Config);
    cfg.reference = vec({0.5});
    CHECK_THROWS_AS(build_setup(cfg), std::invalid_argument);
  }

  SUBCASE("unknown names are rejected") {
    cfg.problem = "p3";
    CHECK_THROWS_WITH_AS(
        build_setup(cfg),
        "config: unknown problem 'p3' (have p1, p2, quadratic, org.demo, org.custom)",
        std::invalid_argument);
    cfg = parse_config(kP2Config);
    cfg.pair = "mahalanobis";
    CHECK_THROWS_AS(build_setup(cfg), std::invalid_argument);
    cfg = parse_config(kP2Config);
    cfg.schedule_preset = "geometric";
    CHECK_THROWS_AS(build_setup(cfg), std::invalid_argument);
  }

  SUBCASE("the entropy distance needs a strictly positive box") {
    cfg.pair = "entropy";
    CHECK_THROWS_WITH_AS(
        build_setup(cfg),
        "config: the entropy distance needs a box with strictly positive lower bounds",
        std::invalid_argument);
  }

  SUBCASE("entropy over a positive box builds and anchors") {
    ExperimentConfig q = parse_config(
        "problem = quadratic\n"
        "pair = entropy\n"
        "quadratic.dim = 2\n"
        "quadratic.lower = [0.1, 0.1]\n"
        "quadratic.upper = [2, 2]\n"
        "quadratic.f.quad = [2, 0, 0, 2]\n"
        "quadratic.f.linear = [-1, -1]\n");
    const ExperimentSetup setup = build_setup(q);
    CHECK(!setup.pair.whole_space);
    CHECK(setup.pair.anchor_ok(setup.x0));
  }
}

TEST_CASE("custom problems assemble from inline schemas") {
  SUBCASE("quadratic objectives reproduce their hand values") {
    const ExperimentConfig cfg = parse_config(
        "problem = quadratic\n"
        "quadratic.dim = 1\n"
        "quadratic.lower = [-1]\n"
        "quadratic.upper = [1]\n"
        "quadratic.f.quad = [2]\n"
        "quadratic.h.quad = [2]\n"
        "quadratic.h.linear = [-1]\n"
        "outer.max_outer = 60\n");
    const ExperimentSetup setup = build_setup(cfg);
    // g_f(x) = x^2, advantage convention: psi(x, y) = y^2 - x^2
    CHECK(setup.f.eval(vec({0.5}), vec({1.0})) == 0.75);
    CHECK(setup.f.eval(vec({1.0}), vec({1.0})) == 0.0);
    // g_h(x) = x^2 - x
    CHECK(setup.h.eval(vec({0.0}), vec({1.0})) == 0.0);
    CHECK(setup.h.eval(vec({0.5}), vec({0.0})) == 0.25);
    // the lower level pins {0}; h pulls toward 1/2 with weight ~ 1/eps_k,
    // so the iterate closes in on 0 like 1/k and the run spends its budget
    const ExperimentResult res = run_experiment(cfg, "", false);
    REQUIRE(res.exit_code == 0);
    CHECK(res.report->termination == Termination::MaxOuter);
    CHECK(std::abs(res.report->final_point[0]) <= 0.01);
    CHECK(res.csv_path.empty());
  }

  SUBCASE("a custom organization matches the built-in demo") {
    const ExperimentConfig cfg = parse_config(
        "problem = org.custom\n"
        "org.followers = 1\n"
        "org.phi = [0, 2, -1]\n"
        "org.wage.1 = [0, 2]\n"
        "org.disutility.1 = [0, 0, 2]\n"
        "outer.step_tol = 1e-8\n"
        "x0 = [0, 0]\n");
    const ExperimentSetup setup = build_setup(cfg);
    REQUIRE(setup.org.has_value());
    CHECK(leader_payoff(*setup.org, vec({1.0, 0.0})) == 1.0);
    CHECK(leader_payoff(*setup.org, vec({0.0, 0.0})) == 0.0);
    CHECK(followers_payoff(*setup.org, vec({0.3, 0.5})) == 0.5);
    const ExperimentResult res = run_experiment(cfg, "", false);
    REQUIRE(res.exit_code == 0);
    CHECK((res.report->final_point - vec({1.0, 0.0})).lpNorm<Eigen::Infinity>() <=
          1e-4);
  }
}

TEST_CASE("experiment runs write the trace and the report") {
  const fs::path dir = scratch_dir("bepsolve_experiment_test");
  const ExperimentConfig cfg = parse_config(kP2Config);
  const ExperimentResult res = run_experiment(cfg, dir.string());
  REQUIRE(res.exit_code == 0);
  REQUIRE(res.report.has_value());
  CHECK(res.report->termination == Termination::StoppedByCriterion);
  CHECK((res.report->final_point - vec({0.5, -0.5})).lpNorm<Eigen::Infinity>() <= 1e-3);

  const std::string csv = read_file(res.csv_path);
  const std::vector<std::string> lines = split_lines(csv);
  REQUIRE(lines.size() == res.report->trace.size() + 1);
  CHECK(lines[0] == "k,eps_k,lambda_k,x_0,x_1,step_norm,inner_iters,inner_residual,D_ref");

  SUBCASE("every row re-validates against the feasible set") {
    const ExperimentSetup setup = build_setup(cfg);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const std::vector<std::string> fields = split_fields(lines[i]);
      REQUIRE(fields.size() == 9);
      CHECK(std::stoi(fields[0]) == static_cast<int>(i) - 1);
      const Vector x = vec({std::stod(fields[3]), std::stod(fields[4])});
      CHECK(setup.K.contains(x, 1e-9));
      CHECK(!fields[8].empty());  // D_ref filled: the config has a reference
    }
    // the run converged, so the recorded steps have gone quiet
    CHECK(std::stod(split_fields(lines.back())[5]) <= 1e-6);
  }

  SUBCASE("the report carries the audit blocks") {
    const nlohmann::json j = nlohmann::json::parse(read_file(res.json_path));
    CHECK(j["problem"] == "p2");
    CHECK(j["termination"] == "stopped_by_criterion");
    CHECK(j["schedule"]["preset"] == "linear_eps_const_lambda");
    REQUIRE(j["final_point"].size() == 2);
    CHECK(j["final_point"][0].get<double>() == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(j["residuals"]["inner_final"].get<double>() <= 1e-6);
    CHECK(j["residuals"]["f_equilibrium"].get<double>() <= 1e-6);
    CHECK(j["residuals"]["h_over_solution_set"].is_number());
    CHECK(j["fejer"]["is_quasi_fejer"].get<bool>());
    CHECK(j["fejer"]["slack_sum"].get<double>() <= j["fejer"]["budget"].get<double>());
    CHECK(j["hypothesis_H"]["q_rule"] == "2p/eps_k with p = 0");
    CHECK(j["hypothesis_H"]["partial_sums"].size() == res.report->trace.size() - 1);
    CHECK(std::abs(j["hypothesis_H"]["total"].get<double>()) <= 1e-8);
    CHECK(j["traps"].is_null());  // not an org problem
  }

  SUBCASE("identical config gives byte-identical files") {
    const fs::path dir2 = scratch_dir("bepsolve_experiment_test_again");
    const ExperimentResult res2 = run_experiment(cfg, dir2.string());
    REQUIRE(res2.exit_code == 0);
    CHECK(read_file(res2.csv_path) == csv);
    CHECK(read_file(res2.json_path) == read_file(res.json_path));
  }

  SUBCASE("without a reference the D_ref column stays blank") {
    ExperimentConfig bare = cfg;
    bare.reference.reset();
    const fs::path dir3 = scratch_dir("bepsolve_experiment_test_bare");
    const ExperimentResult res3 = run_experiment(bare, dir3.string());
    const std::vector<std::string> rows = split_lines(read_file(res3.csv_path));
    for (std::size_t i = 1; i < rows.size(); ++i) {
      CHECK(rows[i].back() == ',');
      CHECK(split_fields(rows[i])[8].empty());
    }
    const nlohmann::json j = nlohmann::json::parse(read_file(res3.json_path));
    CHECK(j["fejer"].is_null());
  }

  SUBCASE("the org preset reports its trap checks") {
    ExperimentConfig org = parse_config(
        "problem = org.demo\nx0 = [0, 0]\nreport.grid_step = 0.01\n");
    const fs::path dir4 = scratch_dir("bepsolve_experiment_test_org");
    const ExperimentResult res4 = run_experiment(org, dir4.string());
    REQUIRE(res4.exit_code == 0);
    const nlohmann::json j = nlohmann::json::parse(read_file(res4.json_path));
    REQUIRE(j["traps"].is_object());
    CHECK(j["traps"]["stationary"].get<bool>());
    CHECK(j["traps"]["aspiration"].get<bool>());
    CHECK(j["traps"]["variational"].get<bool>());
    CHECK(j["traps"]["margin"].get<double>() < 0.0);
    CHECK(j["traps"]["witness"].is_array());
  }
}

TEST_CASE("a non-converging inner solve still flushes its partial trace") {
  ExperimentConfig cfg = parse_config(kP2Config);
  cfg.inner.max_iter = 1;  // starves the first subproblem
  const fs::path dir = scratch_dir("bepsolve_experiment_test_flush");
  const ExperimentResult res = run_experiment(cfg, dir.string());
  CHECK(res.exit_code == 1);
  CHECK(res.error.find("partial trace") != std::string::npos);
  REQUIRE(res.report.has_value());
  CHECK(res.report->termination == Termination::NonConvergedInner);
  const std::vector<std::string> lines = split_lines(read_file(res.csv_path));
  CHECK(lines.size() == res.report->trace.size() + 1);
  CHECK(lines.size() >= 2);
  const nlohmann::json j = nlohmann::json::parse(read_file(res.json_path));
  CHECK(j["termination"] == "non_converged_inner");
}

#ifdef BEPSOLVE_CLI_PATH

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string("BEPSOLVE_LOG=quiet ") + BEPSOLVE_CLI_PATH + " " +
                          args + " > /dev/null 2> /dev/null";
  const int rc = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(rc));
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("the command line drives the solver end to end") {
  const fs::path dir = scratch_dir("bepsolve_cli_test");
  write_file(dir / "p2.cfg", kP2Config);

  SUBCASE("run writes its outputs and exits cleanly") {
    CHECK(run_cli("run --config " + (dir / "p2.cfg").string() + " --out-dir " +
                  (dir / "out").string()) == 0);
    CHECK(fs::exists(dir / "out" / "trace.csv"));
    CHECK(fs::exists(dir / "out" / "report.json"));
    // same run at full verbosity, exercising the per-row trace log
    const std::string chatty = std::string("BEPSOLVE_LOG=trace ") + BEPSOLVE_CLI_PATH +
                               " run --config " + (dir / "p2.cfg").string() +
                               " --out-dir " + (dir / "out2").string() +
                               " > /dev/null 2> /dev/null";
    const int rc = std::system(chatty.c_str());
    REQUIRE(WIFEXITED(rc));
    CHECK(WEXITSTATUS(rc) == 0);
  }

  SUBCASE("an infeasible start is a single-line usage error") {
    write_file(dir / "bad.cfg", "problem = p2\nx0 = [2, 2]\n");
    const std::string cmd = std::string("BEPSOLVE_LOG=quiet ") + BEPSOLVE_CLI_PATH +
                            " run --config " + (dir / "bad.cfg").string() + " 2> " +
                            (dir / "err.txt").string();
    const int rc = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(rc));
    CHECK(WEXITSTATUS(rc) == 2);
    const std::string err = read_file((dir / "err.txt").string());
    CHECK(err.rfind("error: ", 0) == 0);
    CHECK(err.find("x0 not in feasible set") != std::string::npos);
    CHECK(std::count(err.begin(), err.end(), '\n') == 1);
  }

  SUBCASE("verify covers pairs and bifunctions") {
    CHECK(run_cli("verify --pair euclidean --samples 200") == 0);
    CHECK(run_cli("verify --pair entropy --samples 100") == 0);
    CHECK(run_cli("verify --problem p2 --samples 100") == 0);
    CHECK(run_cli("verify") == 2);
  }

  SUBCASE("oracle scans the scalar preset") {
    CHECK(run_cli("oracle --problem p1 --step 0.1") == 0);
  }

  SUBCASE("bad usage exits with code 2") {
    CHECK(run_cli("") == 2);
    CHECK(run_cli("run") == 2);
    CHECK(run_cli("run --nope") == 2);
    CHECK(run_cli("run --config " + (dir / "absent.cfg").string()) == 2);
  }

  SUBCASE("sweep refuses colliding outputs and isolates healthy ones") {
    write_file(dir / "a.cfg", "problem = p1\nout.csv = a.csv\nout.json = a.json\n");
    write_file(dir / "b.cfg", "problem = p1\nout.csv = b.csv\nout.json = b.json\n");
    CHECK(run_cli("sweep --config " + (dir / "a.cfg").string() + " " +
                  (dir / "b.cfg").string() + " --out-dir " + (dir / "sw").string()) ==
          0);
    CHECK(fs::exists(dir / "sw" / "a.csv"));
    CHECK(fs::exists(dir / "sw" / "b.csv"));
    CHECK(run_cli("sweep --config " + (dir / "a.cfg").string() + " " +
                  (dir / "a.cfg").string() + " --out-dir " + (dir / "sw").string()) ==
          2);
  }

  SUBCASE("demo-org tells the whole story") {
    const std::string out = (dir / "demo.txt").string();
    const std::string cmd = std::string("BEPSOLVE_LOG=quiet ") + BEPSOLVE_CLI_PATH +
                            " demo-org > " + out + " 2> /dev/null";
    const int rc = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(rc));
    CHECK(WEXITSTATUS(rc) == 0);
    const std::string text = read_file(out);
    CHECK(text.find("variational trap: yes") != std::string::npos);
    CHECK(text.find("identity audit") != std::string::npos);
    CHECK(text.find("final: (1, 0)") != std::string::npos);
  }
}

#endif  // BEPSOLVE_CLI_PATH
