#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "bepsolve/bifunctions.hpp"
#include "bepsolve/geometry.hpp"

namespace bepsolve {

/// Regular lattice over an axis-aligned box, used by the brute-force
/// equilibrium scans.  The number of points per axis is
/// floor(span / step) + 1, so the upper face is hit only when step divides
/// the span.
struct GridSpec {
  Vector lower, upper;
  double step = 0.0;
  std::size_t max_points = 2'000'000;

  /// Lattice over the bounding box of K.
  static GridSpec from_set(const FeasibleSet& K, double step);

  std::size_t point_count() const;  // throws when over max_points
};

/// All lattice points (no membership filter), in odometer order.
std::vector<Vector> grid_points(const GridSpec& spec);

/// Crude Lipschitz constant of f over K x K from sampled difference
/// quotients in both slots.  Deterministic for a fixed seed.
double lipschitz_estimate(const Bifunction& f, const FeasibleSet& K,
                          int samples = 200, std::uint64_t seed = 1);

/// Tolerance for counting a lattice point as a member of K: exact (1e-9) for
/// boxes, half a grid diagonal otherwise.
double membership_tol(const FeasibleSet& K, const GridSpec& g);

struct EquilibriumScan {
  std::vector<Vector> equilibria;
  double tol = 0.0;            // tolerance actually used
  std::size_t candidates = 0;  // lattice points that lie in K
  std::size_t lattice = 0;     // lattice points in total
  std::size_t inner_solutions = 0;  // bilevel scan: size of the lower set
};

/// Keep every grid candidate u in K with f(u, y) >= -tol for all grid
/// candidates y.  Default tol is lipschitz_estimate(f) * step.  For non-box
/// sets, candidates are lattice points within half a grid diagonal of K
/// (weak membership).
EquilibriumScan brute_force_ep(const Bifunction& f, const FeasibleSet& K,
                               const GridSpec& grid,
                               std::optional<double> tol = {});

/// Bilevel scan: compute the lower-level equilibria of f as above, then keep
/// those that are equilibria of h relative to that set.  Throws when the
/// lower-level set comes out empty (with the best residual seen).
EquilibriumScan brute_force_bep(const Bifunction& f, const Bifunction& h,
                                const FeasibleSet& K, const GridSpec& grid,
                                std::optional<double> tol_low = {},
                                std::optional<double> tol_up = {});

}  // namespace bepsolve
