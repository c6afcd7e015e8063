#pragma once

#include <random>
#include <utility>
#include <vector>

#include "bepsolve/types.hpp"

namespace bepsolve {

enum class SetKind { Box, Simplex, HalfspaceIntersection, Ball };

/// Closed convex feasible set with exact Euclidean projection.
///
/// Supported kinds:
///  - box          {x : lower <= x <= upper}
///  - simplex      {x : x >= 0, sum(x) = radius}
///  - halfspaces   {x : <normals[i], x> <= offsets[i]}, dimension <= 3
///  - ball         {x : |x - center| <= radius}
///
/// Construction checks nonemptiness by producing a witness point.
/// Halfspace intersections enumerate their vertex list at build time
/// (used for the support function and the witness), which is why they
/// are restricted to dimension <= 3 and to bounded intersections.
class FeasibleSet {
public:
  static FeasibleSet box(Vector lower, Vector upper);
  static FeasibleSet simplex(int dimension, double radius);
  static FeasibleSet halfspace_intersection(std::vector<Vector> normals,
                                            Vector offsets);
  static FeasibleSet ball(Vector center, double radius);

  int dimension() const noexcept { return dim_; }
  SetKind kind() const noexcept { return kind_; }

  /// Euclidean nearest point. Idempotent: project(project(p)) == project(p).
  Vector project(const Vector& p) const;

  /// True iff the Euclidean distance from p to the set is <= tol.
  bool contains(const Vector& p, double tol) const;

  /// sup over the set of <direction, x>.
  double support(const Vector& direction) const;

  /// A point inside the set (for simplices: the barycenter, which lies in
  /// the relative interior).
  const Vector& interior_witness() const noexcept { return witness_; }

  /// Strict interior test with a required margin (relative-interior
  /// semantics for simplices).
  bool strictly_interior(const Vector& p, double margin = 0.0) const;

  /// Uniform-ish sample from the interior, at least `margin` (relative to
  /// the set's scale) away from the boundary.  Throws if the interior is
  /// empty.
  Vector sample_interior(std::mt19937_64& rng, double margin = 1e-3) const;

  /// Axis-aligned enclosure [lower, upper].
  std::pair<Vector, Vector> bounding_box() const;

  /// Vertex list: boxes and halfspace intersections only.
  const std::vector<Vector>& vertices() const;

  // accessors used by emitters/validators
  const Vector& box_lower() const { return lower_; }
  const Vector& box_upper() const { return upper_; }
  double radius() const { return radius_; }

private:
  FeasibleSet() = default;
  void check_dim(const Vector& p) const;

  SetKind kind_ = SetKind::Box;
  int dim_ = 0;
  Vector lower_, upper_;              // box
  double radius_ = 0.0;               // simplex / ball
  Vector center_;                     // ball
  std::vector<Vector> normals_;       // halfspaces
  Vector offsets_;                    // halfspaces
  std::vector<Vector> vertices_;      // halfspaces, boxes
  Vector witness_;
};

}  // namespace bepsolve
