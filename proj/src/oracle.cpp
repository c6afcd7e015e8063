#include "bepsolve/oracle.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace bepsolve {

namespace {

std::vector<Eigen::Index> axis_counts(const GridSpec& g) {
  if (!(g.step > 0.0) || !std::isfinite(g.step))
    throw std::invalid_argument("grid: step must be positive");
  if (g.lower.size() == 0 || g.lower.size() != g.upper.size())
    throw std::invalid_argument("grid: bad bounds");
  std::vector<Eigen::Index> counts(g.lower.size());
  for (Eigen::Index i = 0; i < g.lower.size(); ++i) {
    const double span = g.upper[i] - g.lower[i];
    if (span < 0.0) throw std::invalid_argument("grid: lower exceeds upper");
    counts[i] = static_cast<Eigen::Index>(std::floor(span / g.step + 1e-9)) + 1;
  }
  return counts;
}

}  // namespace

double membership_tol(const FeasibleSet& K, const GridSpec& g) {
  if (K.kind() == SetKind::Box) return 1e-9;
  return 0.5 * g.step * std::sqrt(static_cast<double>(K.dimension()));
}

GridSpec GridSpec::from_set(const FeasibleSet& K, double step) {
  GridSpec g;
  auto [lo, hi] = K.bounding_box();
  g.lower = lo;
  g.upper = hi;
  g.step = step;
  return g;
}

std::size_t GridSpec::point_count() const {
  auto counts = axis_counts(*this);
  double total = 1.0;
  for (auto c : counts) total *= static_cast<double>(c);
  if (total > static_cast<double>(max_points)) {
    // suggest the coarsest step that would fit the budget
    const double per_axis =
        std::floor(std::pow(static_cast<double>(max_points),
                            1.0 / static_cast<double>(counts.size())));
    double span_max = 0.0;
    for (Eigen::Index i = 0; i < lower.size(); ++i)
      span_max = std::max(span_max, upper[i] - lower[i]);
    const double hint = span_max / std::max(1.0, per_axis - 1.0);
    throw std::invalid_argument(
        "grid: " + std::to_string(static_cast<std::size_t>(total)) +
        " points exceed the limit of " + std::to_string(max_points) +
        "; increase step to about " + format_g17(hint));
  }
  return static_cast<std::size_t>(total);
}

std::vector<Vector> grid_points(const GridSpec& spec) {
  auto counts = axis_counts(spec);
  const std::size_t total = spec.point_count();
  const Eigen::Index n = spec.lower.size();
  std::vector<Vector> pts;
  pts.reserve(total);
  std::vector<Eigen::Index> idx(n, 0);
  Vector p(n);
  for (std::size_t k = 0; k < total; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) p[i] = spec.lower[i] + idx[i] * spec.step;
    pts.push_back(p);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (++idx[i] < counts[i]) break;
      idx[i] = 0;
    }
  }
  return pts;
}

double lipschitz_estimate(const Bifunction& f, const FeasibleSet& K,
                          int samples, std::uint64_t seed) {
  if (!f.eval) throw std::invalid_argument("lipschitz: bifunction has no eval");
  std::mt19937_64 rng(seed);
  auto [lo, hi] = K.bounding_box();
  const double diam = std::max(1e-12, (hi - lo).norm());
  std::normal_distribution<double> gauss(0.0, 1.0);
  double L = 0.0;
  for (int t = 0; t < samples; ++t) {
    Vector x = K.sample_interior(rng, 1e-3);
    Vector y = K.sample_interior(rng, 1e-3);
    Vector dir(y.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = gauss(rng);
    const double nd = dir.norm();
    if (nd == 0.0) continue;
    dir *= (1e-4 * diam / nd);
    const Vector y2 = K.project(y + dir);
    const Vector x2 = K.project(x + dir);
    const double hy = (y2 - y).norm(), hx = (x2 - x).norm();
    if (hy > 1e-14) L = std::max(L, std::abs(f.eval(x, y2) - f.eval(x, y)) / hy);
    if (hx > 1e-14) L = std::max(L, std::abs(f.eval(x2, y) - f.eval(x, y)) / hx);
  }
  return L;
}

EquilibriumScan brute_force_ep(const Bifunction& f, const FeasibleSet& K,
                               const GridSpec& grid, std::optional<double> tol) {
  if (!f.eval) throw std::invalid_argument("brute force: bifunction has no eval");
  if (tol && (!(*tol >= 0.0) || !std::isfinite(*tol)))
    throw std::invalid_argument("brute force: tol must be nonnegative");

  EquilibriumScan out;
  auto lattice = grid_points(grid);
  out.lattice = lattice.size();

  const double mtol = membership_tol(K, grid);
  std::vector<Vector> cand;
  cand.reserve(lattice.size());
  for (auto& p : lattice)
    if (K.contains(p, mtol)) cand.push_back(std::move(p));
  out.candidates = cand.size();

  out.tol = tol ? *tol
                : std::max(1e-12, lipschitz_estimate(f, K) * grid.step);

  for (const auto& u : cand) {
    bool ok = true;
    for (const auto& y : cand) {
      if (f.eval(u, y) < -out.tol) {
        ok = false;
        break;
      }
    }
    if (ok) out.equilibria.push_back(u);
  }
  return out;
}

EquilibriumScan brute_force_bep(const Bifunction& f, const Bifunction& h,
                                const FeasibleSet& K, const GridSpec& grid,
                                std::optional<double> tol_low,
                                std::optional<double> tol_up) {
  if (!h.eval) throw std::invalid_argument("brute force: bifunction has no eval");
  EquilibriumScan lower = brute_force_ep(f, K, grid, tol_low);
  if (lower.equilibria.empty()) {
    // report how close the best candidate came, to guide a retry
    auto lattice = grid_points(grid);
    const double mtol = membership_tol(K, grid);
    double best = -std::numeric_limits<double>::infinity();
    Vector best_pt;
    for (const auto& u : lattice) {
      if (!K.contains(u, mtol)) continue;
      double worst = std::numeric_limits<double>::infinity();
      for (const auto& y : lattice) {
        if (!K.contains(y, mtol)) continue;
        worst = std::min(worst, f.eval(u, y));
      }
      if (worst > best) {
        best = worst;
        best_pt = u;
      }
    }
    std::string msg =
        "brute force: no lower-level equilibria on the grid (best residual " +
        format_g17(best) + " against tolerance " + format_g17(lower.tol) +
        "); loosen the tolerance or refine the grid";
    throw std::runtime_error(msg);
  }

  EquilibriumScan out;
  out.lattice = lower.lattice;
  out.candidates = lower.candidates;
  out.inner_solutions = lower.equilibria.size();
  out.tol = tol_up ? *tol_up
                   : std::max(1e-12, lipschitz_estimate(h, K) * grid.step);

  for (const auto& u : lower.equilibria) {
    bool ok = true;
    for (const auto& v : lower.equilibria) {
      if (h.eval(u, v) < -out.tol) {
        ok = false;
        break;
      }
    }
    if (ok) out.equilibria.push_back(u);
  }
  return out;
}

}  // namespace bepsolve
