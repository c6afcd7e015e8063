#include "bepsolve/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>

#include "json.hpp"

namespace bepsolve {

using ordered_json = nlohmann::ordered_json;

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* raw = std::getenv("BEPSOLVE_LOG");
    if (!raw) return LogLevel::Info;
    const std::string v(raw);
    if (v == "quiet") return LogLevel::Quiet;
    if (v == "trace") return LogLevel::Trace;
    return LogLevel::Info;
  }();
  return level;
}

namespace {

void emit_log(const std::string& line) {
  static std::mutex gate;  // sweep runs write from several threads
  std::lock_guard<std::mutex> lock(gate);
  std::cerr << line << '\n';
}

}  // namespace

void log_info(const std::string& line) {
  if (static_cast<int>(log_level()) >= static_cast<int>(LogLevel::Info)) emit_log(line);
}

void log_trace(const std::string& line) {
  if (static_cast<int>(log_level()) >= static_cast<int>(LogLevel::Trace)) emit_log(line);
}

// ---------------------------------------------------------------------------
// config text -> ExperimentConfig

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.')
      return false;
  return true;
}

// Key/value lines in file order, with consumption tracking so that leftover
// keys can be reported as unknown.
struct KeyBag {
  std::map<std::string, std::string> kv;
  std::map<std::string, bool> used;

  const std::string* find(const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) return nullptr;
    used[key] = true;
    return &it->second;
  }

  void finish(const std::string& problem) const {
    for (const auto& [key, value] : kv) {
      (void)value;
      if (used.count(key)) continue;
      if (key.rfind("quadratic.", 0) == 0 && problem != "quadratic")
        throw std::invalid_argument("config: key '" + key +
                                    "' only applies to problem = quadratic");
      if (key.rfind("org.", 0) == 0 && problem != "org.custom")
        throw std::invalid_argument("config: key '" + key +
                                    "' only applies to problem = org.custom");
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
};

KeyBag scan_config(const std::string& text) {
  KeyBag bag;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not a key = value pair");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_key(key))
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " has a malformed key");
    if (value.empty())
      throw std::invalid_argument("config: key '" + key + "' has an empty value");
    if (!bag.kv.emplace(key, value).second)
      throw std::invalid_argument("config: duplicate key '" + key + "'");
  }
  return bag;
}

double parse_number(const std::string& raw, const std::string& key) {
  const char* c = raw.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(c, &end);
  if (end == c || *end != '\0' || !std::isfinite(v))
    throw std::invalid_argument("config: key '" + key +
                                "' expects a finite number, got '" + raw + "'");
  return v;
}

int parse_int(const std::string& raw, const std::string& key) {
  const double v = parse_number(raw, key);
  if (v != std::floor(v) || std::abs(v) > 2147483647.0)
    throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" +
                                raw + "'");
  return static_cast<int>(v);
}

std::uint64_t parse_u64(const std::string& raw, const std::string& key) {
  const char* c = raw.c_str();
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(c, &end, 10);
  if (end == c || *end != '\0' || errno == ERANGE || raw[0] == '-')
    throw std::invalid_argument("config: key '" + key +
                                "' expects a nonnegative integer, got '" + raw + "'");
  return static_cast<std::uint64_t>(v);
}

std::vector<double> parse_list(const std::string& raw, const std::string& key) {
  if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']')
    throw std::invalid_argument("config: key '" + key +
                                "' expects a bracketed list like [1, 2]");
  std::vector<double> out;
  std::string body = raw.substr(1, raw.size() - 2);
  std::size_t start = 0;
  while (start <= body.size()) {
    const std::size_t comma = body.find(',', start);
    const std::string token =
        trim(body.substr(start, comma == std::string::npos ? comma : comma - start));
    if (token.empty())
      throw std::invalid_argument("config: key '" + key + "' has an empty list entry");
    out.push_back(parse_number(token, key));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty())
    throw std::invalid_argument("config: key '" + key + "' has an empty list");
  return out;
}

Vector parse_vector(const std::string& raw, const std::string& key) {
  const std::vector<double> xs = parse_list(raw, key);
  Vector v(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) v[static_cast<int>(i)] = xs[i];
  return v;
}

double get_number(KeyBag& bag, const std::string& key, double fallback) {
  const std::string* raw = bag.find(key);
  return raw ? parse_number(*raw, key) : fallback;
}

int get_int(KeyBag& bag, const std::string& key, int fallback) {
  const std::string* raw = bag.find(key);
  return raw ? parse_int(*raw, key) : fallback;
}

std::string get_string(KeyBag& bag, const std::string& key, std::string fallback) {
  const std::string* raw = bag.find(key);
  return raw ? *raw : fallback;
}

std::optional<Vector> maybe_vector(KeyBag& bag, const std::string& key) {
  const std::string* raw = bag.find(key);
  if (!raw) return std::nullopt;
  return parse_vector(*raw, key);
}

std::vector<double> require_list(KeyBag& bag, const std::string& key,
                                 const std::string& problem) {
  const std::string* raw = bag.find(key);
  if (!raw)
    throw std::invalid_argument("config: problem " + problem + " needs key '" + key +
                                "'");
  return parse_list(*raw, key);
}

void check_positive(double v, const std::string& key) {
  if (!(v > 0.0))
    throw std::invalid_argument("config: " + key + " must be positive");
}

Convention parse_convention(const std::string& raw, const std::string& key) {
  if (raw == "loss") return Convention::Loss;
  if (raw == "advantage") return Convention::Advantage;
  throw std::invalid_argument("config: key '" + key +
                              "' must be loss or advantage, got '" + raw + "'");
}

QuadraticSpec parse_quadratic(KeyBag& bag) {
  QuadraticSpec q;
  {
    const std::string* raw = bag.find("quadratic.dim");
    if (!raw)
      throw std::invalid_argument("config: problem quadratic needs key 'quadratic.dim'");
    q.dim = parse_int(*raw, "quadratic.dim");
  }
  if (q.dim < 1) throw std::invalid_argument("config: quadratic.dim must be at least 1");
  const auto n = static_cast<std::size_t>(q.dim);

  auto vec_or = [&](const std::string& key, double fill) {
    auto v = maybe_vector(bag, key);
    return v ? *v : Vector::Constant(q.dim, fill).eval();
  };
  q.lower = vec_or("quadratic.lower", -1.0);
  q.upper = vec_or("quadratic.upper", 1.0);
  q.f_quad = require_list(bag, "quadratic.f.quad", "quadratic");
  q.f_linear = vec_or("quadratic.f.linear", 0.0);
  if (const std::string* raw = bag.find("quadratic.h.quad"))
    q.h_quad = parse_list(*raw, "quadratic.h.quad");
  else
    q.h_quad.assign(n * n, 0.0);
  q.h_linear = vec_or("quadratic.h.linear", 0.0);
  q.f_convention = parse_convention(
      get_string(bag, "quadratic.f.convention", "advantage"), "quadratic.f.convention");
  q.h_convention = parse_convention(
      get_string(bag, "quadratic.h.convention", "advantage"), "quadratic.h.convention");

  for (const auto& [key, len] :
       std::initializer_list<std::pair<const char*, std::size_t>>{
           {"quadratic.f.quad", q.f_quad.size()}, {"quadratic.h.quad", q.h_quad.size()}})
    if (len != n * n)
      throw std::invalid_argument("config: key '" + std::string(key) + "' needs " +
                                  std::to_string(n * n) + " row-major entries");
  for (const auto& [key, len] : std::initializer_list<std::pair<const char*, int>>{
           {"quadratic.lower", static_cast<int>(q.lower.size())},
           {"quadratic.upper", static_cast<int>(q.upper.size())},
           {"quadratic.f.linear", static_cast<int>(q.f_linear.size())},
           {"quadratic.h.linear", static_cast<int>(q.h_linear.size())}})
    if (len != q.dim)
      throw std::invalid_argument("config: key '" + std::string(key) + "' needs " +
                                  std::to_string(q.dim) + " entries");
  return q;
}

CustomOrgSpec parse_custom_org(KeyBag& bag) {
  CustomOrgSpec o;
  o.followers = get_int(bag, "org.followers", 1);
  if (o.followers < 1)
    throw std::invalid_argument("config: org.followers must be at least 1");
  o.phi = require_list(bag, "org.phi", "org.custom");
  o.leader_weight = get_number(bag, "org.leader_weight", 1.0);
  check_positive(o.leader_weight, "org.leader_weight");
  const int dim = 1 + o.followers;
  {
    auto v = maybe_vector(bag, "org.lower");
    o.lower = v ? *v : Vector::Zero(dim).eval();
    v = maybe_vector(bag, "org.upper");
    o.upper = v ? *v : Vector::Constant(dim, 1.0).eval();
  }
  if (o.lower.size() != dim || o.upper.size() != dim)
    throw std::invalid_argument("config: org.lower and org.upper need " +
                                std::to_string(dim) + " entries (leader first)");
  for (int j = 1; j <= o.followers; ++j) {
    o.wage.push_back(require_list(bag, "org.wage." + std::to_string(j), "org.custom"));
    o.disutility.push_back(
        require_list(bag, "org.disutility." + std::to_string(j), "org.custom"));
  }
  return o;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  KeyBag bag = scan_config(text);
  ExperimentConfig cfg;
  cfg.problem = get_string(bag, "problem", cfg.problem);
  cfg.pair = get_string(bag, "pair", cfg.pair);
  cfg.schedule_preset = get_string(bag, "schedule", cfg.schedule_preset);
  cfg.eps0 = get_number(bag, "schedule.eps0", cfg.eps0);
  cfg.eps_slope = get_number(bag, "schedule.slope", cfg.eps_slope);
  cfg.lambda = get_number(bag, "schedule.lambda", cfg.lambda);
  check_positive(cfg.eps0, "schedule.eps0");
  check_positive(cfg.lambda, "schedule.lambda");
  if (cfg.eps_slope < 0.0)
    throw std::invalid_argument("config: schedule.slope must be nonnegative");

  if (const std::string* raw = bag.find("x0")) {
    if (*raw != "auto") cfg.x0 = parse_vector(*raw, "x0");
  }
  cfg.max_outer = get_int(bag, "outer.max_outer", cfg.max_outer);
  if (cfg.max_outer < 1)
    throw std::invalid_argument("config: outer.max_outer must be at least 1");
  cfg.step_tol = get_number(bag, "outer.step_tol", cfg.step_tol);
  if (cfg.step_tol < 0.0)
    throw std::invalid_argument("config: outer.step_tol must be nonnegative");
  cfg.inner.tol = get_number(bag, "inner.tol", cfg.inner.tol);
  check_positive(cfg.inner.tol, "inner.tol");
  cfg.inner.max_iter = get_int(bag, "inner.max_iter", cfg.inner.max_iter);
  if (cfg.inner.max_iter < 1)
    throw std::invalid_argument("config: inner.max_iter must be at least 1");
  cfg.inner.prox_step = get_number(bag, "inner.prox_step", cfg.inner.prox_step);
  if (cfg.inner.prox_step < 0.0)
    throw std::invalid_argument("config: inner.prox_step must be nonnegative");
  {
    const std::string mode = get_string(bag, "inner.mode", "auto");
    if (mode == "auto")
      cfg.inner.mode = InnerMode::Auto;
    else if (mode == "objective")
      cfg.inner.mode = InnerMode::ObjectiveFastPath;
    else if (mode == "extragradient")
      cfg.inner.mode = InnerMode::Extragradient;
    else
      throw std::invalid_argument(
          "config: inner.mode must be auto, objective or extragradient, got '" + mode +
          "'");
  }
  cfg.reference = maybe_vector(bag, "reference");
  if (const std::string* raw = bag.find("seed")) cfg.seed = parse_u64(*raw, "seed");
  cfg.csv_path = get_string(bag, "out.csv", cfg.csv_path);
  cfg.json_path = get_string(bag, "out.json", cfg.json_path);
  cfg.report_grid_step = get_number(bag, "report.grid_step", cfg.report_grid_step);
  if (cfg.report_grid_step < 0.0)
    throw std::invalid_argument("config: report.grid_step must be nonnegative");

  if (cfg.problem == "quadratic") cfg.quadratic = parse_quadratic(bag);
  if (cfg.problem == "org.custom") cfg.custom_org = parse_custom_org(bag);

  bag.finish(cfg.problem);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::invalid_argument("config: cannot read '" + path + "'");
  std::ostringstream body;
  body << in.rdbuf();
  return parse_config(body.str());
}

// ---------------------------------------------------------------------------
// ExperimentConfig -> solver objects

namespace {

double polyval(const std::vector<double>& coeffs, double t) {
  double acc = 0.0;
  for (std::size_t i = coeffs.size(); i-- > 0;) acc = acc * t + coeffs[i];
  return acc;
}

ScalarField quadratic_field(int n, const std::vector<double>& quad, const Vector& lin) {
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = quad[static_cast<std::size_t>(i) * n + j];
  const Eigen::MatrixXd sym = 0.5 * (A + A.transpose());
  return make_scalar_field(
      [A, lin](const Vector& x) { return 0.5 * x.dot(A * x) + lin.dot(x); },
      [sym, lin](const Vector& x) { return Vector(sym * x + lin); });
}

Organization org_from_spec(const CustomOrgSpec& spec) {
  std::vector<std::function<double(const Vector&)>> wages, disutilities;
  for (int j = 0; j < spec.followers; ++j) {
    wages.push_back([coeffs = spec.wage[static_cast<std::size_t>(j)],
                     j](const Vector& x) { return polyval(coeffs, x[1 + j]); });
    disutilities.push_back([coeffs = spec.disutility[static_cast<std::size_t>(j)]](
                               const Vector& own) { return polyval(coeffs, own[0]); });
  }
  return Organization{
      .n_tasks = 1,
      .n_followers = spec.followers,
      .revenue = [phi = spec.phi](double q, double) { return polyval(phi, q); },
      .production = [](const Vector& x) { return std::make_pair(x.sum(), 1.0); },
      .means_cost = [](const Vector&) { return 0.0; },
      .wages = std::move(wages),
      .disutilities = std::move(disutilities),
      .leader_weight = spec.leader_weight,
      .effort_bounds = FeasibleSet::box(spec.lower, spec.upper),
  };
}

struct ProblemPieces {
  Bifunction f, h;
  FeasibleSet K;
  std::optional<Organization> org;
  std::optional<Vector> hint;
};

ProblemPieces make_problem(const ExperimentConfig& cfg) {
  if (cfg.problem == "p1") {
    Problem P = problem_p1();
    return {std::move(P.f), std::move(P.h), std::move(P.K), std::nullopt, P.solution};
  }
  if (cfg.problem == "p2") {
    Problem P = problem_p2();
    return {std::move(P.f), std::move(P.h), std::move(P.K), std::nullopt, P.solution};
  }
  if (cfg.problem == "org.demo") {
    Organization org = demo_organization();
    OrganizationBEP bep = build_bep(org);
    return {std::move(bep.f), std::move(bep.h), std::move(bep.K), std::move(org),
            std::nullopt};
  }
  if (cfg.problem == "org.custom") {
    if (!cfg.custom_org)
      throw std::invalid_argument("config: problem org.custom has no inline schema");
    Organization org = org_from_spec(*cfg.custom_org);
    OrganizationBEP bep = build_bep(org);
    return {std::move(bep.f), std::move(bep.h), std::move(bep.K), std::move(org),
            std::nullopt};
  }
  if (cfg.problem == "quadratic") {
    if (!cfg.quadratic)
      throw std::invalid_argument("config: problem quadratic has no inline schema");
    const QuadraticSpec& q = *cfg.quadratic;
    return {from_objective(quadratic_field(q.dim, q.f_quad, q.f_linear), q.f_convention,
                           "config_f"),
            from_objective(quadratic_field(q.dim, q.h_quad, q.h_linear), q.h_convention,
                           "config_h"),
            FeasibleSet::box(q.lower, q.upper), std::nullopt, std::nullopt};
  }
  throw std::invalid_argument("config: unknown problem '" + cfg.problem +
                              "' (have p1, p2, quadratic, org.demo, org.custom)");
}

}  // namespace

ExperimentSetup build_setup(const ExperimentConfig& cfg) {
  ProblemPieces prob = make_problem(cfg);

  ProximalPair pair;
  if (cfg.pair == "euclidean") {
    pair = build_euclidean_pair();
  } else if (cfg.pair == "entropy") {
    pair = build_bregman_pair(entropy_generator());
    // the KL domain is the open positive orthant; a box that touches it
    // nowhere or only on its boundary would put feasible points outside
    if (prob.K.kind() != SetKind::Box || (prob.K.box_lower().array() <= 0.0).any())
      throw std::invalid_argument(
          "config: the entropy distance needs a box with strictly positive lower "
          "bounds");
  } else {
    throw std::invalid_argument("config: unknown pair '" + cfg.pair +
                                "' (have euclidean, entropy)");
  }

  if (cfg.schedule_preset != "linear")
    throw std::invalid_argument("config: unknown schedule '" + cfg.schedule_preset +
                                "' (have linear)");
  Schedule schedule = linear_eps_const_lambda(cfg.eps0, cfg.eps_slope, cfg.lambda);
  validate_schedule(schedule);

  Vector x0 = cfg.x0 ? *cfg.x0 : prob.K.interior_witness();
  if (x0.size() != prob.K.dimension())
    throw std::invalid_argument("config: x0 has dimension " + std::to_string(x0.size()) +
                                " but the problem has dimension " +
                                std::to_string(prob.K.dimension()));
  if (!all_finite(x0))
    throw std::invalid_argument("config: x0 has non-finite coordinates");
  if (!prob.K.contains(x0, 1e-9))
    throw std::invalid_argument("x0 not in feasible set");

  OuterOptions outer;
  outer.max_outer = cfg.max_outer;
  outer.step_tol = cfg.step_tol;
  outer.inner = cfg.inner;
  if (cfg.reference) {
    if (cfg.reference->size() != prob.K.dimension())
      throw std::invalid_argument("config: reference has dimension " +
                                  std::to_string(cfg.reference->size()) +
                                  " but the problem has dimension " +
                                  std::to_string(prob.K.dimension()));
    if (!all_finite(*cfg.reference))
      throw std::invalid_argument("config: reference has non-finite coordinates");
    outer.z_ref = cfg.reference;
  }

  return {std::move(prob.f),   std::move(prob.h), std::move(prob.K),
          std::move(pair),     std::move(schedule), std::move(x0),
          std::move(outer),    std::move(prob.org), std::move(prob.hint)};
}

// ---------------------------------------------------------------------------
// emitters

namespace {

std::string csv_text(const std::vector<TraceRow>& trace) {
  if (trace.empty())
    throw std::invalid_argument("write_trace_csv: empty trace");
  const int n = static_cast<int>(trace.front().x.size());
  std::string s = "k,eps_k,lambda_k";
  for (int i = 0; i < n; ++i) s += ",x_" + std::to_string(i);
  s += ",step_norm,inner_iters,inner_residual,D_ref\n";
  for (const TraceRow& row : trace) {
    if (row.x.size() != n)
      throw std::invalid_argument("write_trace_csv: ragged trace");
    s += std::to_string(row.k);
    s += ',' + format_g17(row.eps_k) + ',' + format_g17(row.lambda_k);
    for (int i = 0; i < n; ++i) s += ',' + format_g17(row.x[i]);
    s += ',' + format_g17(row.step_norm);
    s += ',' + std::to_string(row.inner_iterations);
    s += ',' + format_g17(row.inner_residual);
    s += ',';
    if (row.D_to_reference) s += format_g17(*row.D_to_reference);
    s += '\n';
  }
  return s;
}

void write_text(const std::filesystem::path& path, const std::string& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << body;
  out.flush();
  if (!out) throw std::runtime_error("short write to " + path.string());
}

ordered_json vec_to_json(const Vector& v) {
  ordered_json a = ordered_json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

// Approximate lower-level solution set on a lattice, for the report's
// residual-over-solution-set block.  Matches brute_force_ep for difference
// bifunctions (same candidate filter, same default tolerance) but runs in one
// pass over the lattice instead of scanning counter-moves pairwise.
std::vector<Vector> lattice_solution_set(const Bifunction& f, const FeasibleSet& K,
                                         const GridSpec& grid) {
  if (!f.difference_objective) return {};
  const auto& G = *f.difference_objective;
  const double mtol = membership_tol(K, grid);
  std::vector<Vector> candidates;
  std::vector<double> values;
  double gmin = std::numeric_limits<double>::infinity();
  for (Vector& p : grid_points(grid)) {
    if (!K.contains(p, mtol)) continue;
    const double g = G.value(p);
    gmin = std::min(gmin, g);
    values.push_back(g);
    candidates.push_back(std::move(p));
  }
  const double tol = lipschitz_estimate(f, K) * grid.step;
  std::vector<Vector> out;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (values[i] - gmin <= tol) out.push_back(std::move(candidates[i]));
  return out;
}

std::optional<GridSpec> report_grid(const FeasibleSet& K, double step,
                                    std::size_t budget) {
  if (step <= 0.0 || K.dimension() > 3) return std::nullopt;
  GridSpec grid = GridSpec::from_set(K, step);
  try {
    if (grid.point_count() > budget) return std::nullopt;
  } catch (const std::exception&) {
    return std::nullopt;
  }
  return grid;
}

}  // namespace

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  write_text(std::filesystem::path(path), csv_text(trace));
}

std::string report_json(const ExperimentConfig& cfg, const ExperimentSetup& setup,
                        const SolveReport& rep) {
  if (rep.trace.empty())
    throw std::invalid_argument("report_json: empty trace");

  ordered_json j;
  j["problem"] = cfg.problem;
  j["pair"] = cfg.pair;
  j["seed"] = cfg.seed;
  j["schedule"] = ordered_json{{"preset", setup.schedule.preset},
                               {"eps0", cfg.eps0},
                               {"slope", cfg.eps_slope},
                               {"lambda", cfg.lambda}};
  j["start"] = vec_to_json(rep.trace.front().x);
  j["termination"] = to_string(rep.termination);
  j["outer_iterations"] = rep.trace.size() - 1;
  j["final_point"] = vec_to_json(rep.final_point);
  j["inner_tol_sum"] = rep.inner_tol_sum;

  const auto grid = report_grid(setup.K, cfg.report_grid_step, 60'000);

  {
    ordered_json res;
    res["inner_final"] = rep.trace.back().inner_residual;
    res["f_equilibrium"] = ep_residual(setup.f, setup.K, rep.final_point);
    res["h_over_solution_set"] = nullptr;
    if (grid) {
      const std::vector<Vector> lower = lattice_solution_set(setup.f, setup.K, *grid);
      if (!lower.empty()) {
        double worst = 0.0;
        for (const Vector& v : lower)
          worst = std::max(worst, -setup.h.eval(rep.final_point, v));
        res["h_over_solution_set"] = worst;
      }
    }
    j["residuals"] = res;
  }

  if (setup.outer.z_ref) {
    const FejerReport fr = monitor_fejer(rep, *setup.outer.z_ref, setup.pair);
    j["fejer"] = ordered_json{{"slack_sum", fr.slack_sum},
                              {"budget", fr.budget},
                              {"is_quasi_fejer", fr.is_quasi_fejer}};
  } else {
    j["fejer"] = nullptr;
  }

  // Inexactness summability: with the zero normal-cone selection the shifted
  // direction q_k = 2 p / eps_k vanishes, so one estimate at q = 0 prices
  // every summand lambda_k eps_k [f_z*(q_k) - sigma(q_k)].
  j["hypothesis_H"] = nullptr;
  if (grid) {
    try {
      const HypothesisEstimate est = estimate_hypothesis_H(
          setup.f, setup.K, rep.final_point, Vector::Zero(setup.K.dimension()), *grid);
      ordered_json sums = ordered_json::array();
      double acc = 0.0;
      for (std::size_t i = 1; i < rep.trace.size(); ++i) {
        acc += rep.trace[i].lambda_k * rep.trace[i].eps_k * est.value;
        sums.push_back(acc);
      }
      j["hypothesis_H"] = ordered_json{{"q_rule", "2p/eps_k with p = 0"},
                                       {"value_at_q0", est.value},
                                       {"conjugate", est.conjugate},
                                       {"support", est.support},
                                       {"solution_points", est.solution_points},
                                       {"partial_sums", sums},
                                       {"total", acc}};
    } catch (const std::exception& e) {
      j["hypothesis_H"] = ordered_json{{"error", e.what()}};
    }
  }

  j["traps"] = nullptr;
  if (setup.org) {
    try {
      const double lambda_last = rep.trace.size() > 1 ? rep.trace.back().lambda_k
                                                      : setup.schedule.lambda(0);
      std::vector<Vector> points;
      points.reserve(rep.trace.size());
      for (const TraceRow& row : rep.trace) points.push_back(row.x);
      const GridSpec trap_grid = GridSpec::from_set(
          setup.K, cfg.report_grid_step > 0.0 ? cfg.report_grid_step : 0.01);
      const TrapReport tr = detect_traps(*setup.org, rep.final_point, 1.0 / lambda_last,
                                         setup.pair, trap_grid, points);
      ordered_json t;
      t["stationary"] = tr.stationary;
      t["aspiration"] = tr.aspiration ? ordered_json(*tr.aspiration) : ordered_json();
      t["variational"] = tr.variational ? ordered_json(*tr.variational) : ordered_json();
      t["margin"] = tr.margin;
      t["k0"] = tr.k0;
      t["scanned"] = tr.scanned;
      t["witness"] = tr.witness ? vec_to_json(*tr.witness) : ordered_json();
      j["traps"] = t;
    } catch (const std::exception& e) {
      j["traps"] = ordered_json{{"error", e.what()}};
    }
  }

  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// the run op

namespace {

std::filesystem::path resolve_out(const std::string& out_dir, const std::string& rel) {
  std::filesystem::path p(rel);
  if (!out_dir.empty() && p.is_relative()) p = std::filesystem::path(out_dir) / p;
  return p;
}

std::string point_to_string(const Vector& v) {
  std::string s = "(";
  for (int i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += format_g17(v[i]);
  }
  return s + ")";
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                bool write_files) {
  const ExperimentSetup setup = build_setup(cfg);
  const std::filesystem::path csv = resolve_out(out_dir, cfg.csv_path);
  const std::filesystem::path json = resolve_out(out_dir, cfg.json_path);

  ExperimentResult out;
  SolveReport rep;
  try {
    rep = solve_bep(setup.f, setup.h, setup.K, setup.pair, setup.schedule, setup.x0,
                    setup.outer);
  } catch (const NumericalError& e) {
    out.exit_code = 1;
    out.error = e.what();
    if (write_files) {
      // flush what is still known: the starting row
      TraceRow row0;
      row0.k = 0;
      row0.x = setup.x0;
      if (setup.outer.z_ref) {
        try {
          row0.D_to_reference = setup.pair.D(*setup.outer.z_ref, setup.x0);
        } catch (const std::exception&) {
        }
      }
      write_text(csv, csv_text({row0}));
      ordered_json j;
      j["problem"] = cfg.problem;
      j["pair"] = cfg.pair;
      j["seed"] = cfg.seed;
      j["termination"] = "numerical_error";
      j["error"] = out.error;
      j["snapshot"] = vec_to_json(e.snapshot());
      write_text(json, j.dump(2) + "\n");
      out.csv_path = csv.string();
      out.json_path = json.string();
    }
    return out;
  }

  out.report = rep;
  if (rep.termination == Termination::NonConvergedInner) {
    out.exit_code = 1;
    out.error = "inner solve missed its tolerance at outer iteration " +
                std::to_string(rep.trace.back().k - 1) + "; partial trace kept";
  }
  if (write_files) {
    write_text(csv, csv_text(rep.trace));
    write_text(json, report_json(cfg, setup, rep));
    out.csv_path = csv.string();
    out.json_path = json.string();
    log_info("run: wrote " + out.csv_path + " and " + out.json_path);
  }
  log_info("run: " + to_string(rep.termination) + " after " +
           std::to_string(rep.trace.size() - 1) + " outer steps, final " +
           point_to_string(rep.final_point));
  if (static_cast<int>(log_level()) >= static_cast<int>(LogLevel::Trace))
    for (const TraceRow& row : rep.trace)
      log_trace("  k=" + std::to_string(row.k) + " x=" + point_to_string(row.x) +
                " step=" + format_g17(row.step_norm) +
                " inner_residual=" + format_g17(row.inner_residual));
  return out;
}

}  // namespace bepsolve
