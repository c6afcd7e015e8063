#include "bepsolve/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>

namespace bepsolve {

namespace {

std::vector<Vector> box_corners(const Vector& lo, const Vector& hi) {
  const int n = static_cast<int>(lo.size());
  std::vector<Vector> out;
  if (n > 10) return out;  // corner list only kept at small dimension
  const std::size_t count = std::size_t{1} << n;
  out.reserve(count);
  for (std::size_t mask = 0; mask < count; ++mask) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = (mask >> i) & 1 ? hi[i] : lo[i];
    out.push_back(std::move(v));
  }
  return out;
}

// All vertices of {x : <n_i, x> <= b_i}, dimension <= 3: solve every
// dim-sized subsystem and keep the feasible, non-duplicate solutions.
std::vector<Vector> enumerate_vertices(const std::vector<Vector>& normals,
                                       const Vector& offsets, int dim) {
  const int m = static_cast<int>(normals.size());
  std::vector<Vector> verts;
  std::vector<int> idx(dim);
  auto feasible = [&](const Vector& x) {
    for (int i = 0; i < m; ++i)
      if (normals[i].dot(x) > offsets[i] + 1e-9 * (1.0 + std::abs(offsets[i])))
        return false;
    return true;
  };
  auto push_unique = [&](const Vector& x) {
    for (const auto& v : verts)
      if ((v - x).norm() <= 1e-9) return;
    verts.push_back(x);
  };
  // iterate over all subsets of size == dim
  std::vector<int> comb(dim);
  std::iota(comb.begin(), comb.end(), 0);
  if (m < dim) return verts;
  while (true) {
    Eigen::MatrixXd A(dim, dim);
    Vector b(dim);
    for (int r = 0; r < dim; ++r) {
      A.row(r) = normals[comb[r]].transpose();
      b[r] = offsets[comb[r]];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (lu.isInvertible()) {
      Vector x = lu.solve(b);
      if (x.allFinite() && feasible(x)) push_unique(x);
    }
    // next combination
    int i = dim - 1;
    while (i >= 0 && comb[i] == m - dim + i) --i;
    if (i < 0) break;
    ++comb[i];
    for (int j = i + 1; j < dim; ++j) comb[j] = comb[j - 1] + 1;
  }
  return verts;
}

}  // namespace

void FeasibleSet::check_dim(const Vector& p) const {
  if (static_cast<int>(p.size()) != dim_)
    throw std::invalid_argument("dimension mismatch: expected " +
                                std::to_string(dim_) + ", got " +
                                std::to_string(p.size()));
}

FeasibleSet FeasibleSet::box(Vector lower, Vector upper) {
  if (lower.size() == 0 || lower.size() != upper.size())
    throw std::invalid_argument("box: bounds must be nonempty and same size");
  if (!all_finite(lower) || !all_finite(upper))
    throw std::invalid_argument("box: bounds must be finite");
  for (Eigen::Index i = 0; i < lower.size(); ++i)
    if (lower[i] > upper[i])
      throw std::invalid_argument("box: lower bound exceeds upper bound");
  FeasibleSet s;
  s.kind_ = SetKind::Box;
  s.dim_ = static_cast<int>(lower.size());
  s.lower_ = std::move(lower);
  s.upper_ = std::move(upper);
  s.witness_ = 0.5 * (s.lower_ + s.upper_);
  s.vertices_ = box_corners(s.lower_, s.upper_);
  return s;
}

FeasibleSet FeasibleSet::simplex(int dimension, double radius) {
  if (dimension < 1) throw std::invalid_argument("simplex: dimension must be >= 1");
  if (!(radius > 0.0) || !std::isfinite(radius))
    throw std::invalid_argument("simplex: radius must be positive");
  FeasibleSet s;
  s.kind_ = SetKind::Simplex;
  s.dim_ = dimension;
  s.radius_ = radius;
  s.witness_ = Vector::Constant(dimension, radius / dimension);
  s.vertices_.reserve(dimension);
  for (int i = 0; i < dimension; ++i) {
    Vector v = Vector::Zero(dimension);
    v[i] = radius;
    s.vertices_.push_back(std::move(v));
  }
  return s;
}

FeasibleSet FeasibleSet::halfspace_intersection(std::vector<Vector> normals,
                                                Vector offsets) {
  if (normals.empty() || static_cast<Eigen::Index>(normals.size()) != offsets.size())
    throw std::invalid_argument("halfspaces: need one offset per normal");
  const int dim = static_cast<int>(normals[0].size());
  if (dim < 1 || dim > 3)
    throw std::invalid_argument(
        "halfspaces: supported only for dimension 1..3 (vertex enumeration)");
  for (const auto& n : normals) {
    if (static_cast<int>(n.size()) != dim)
      throw std::invalid_argument("halfspaces: inconsistent normal dimensions");
    if (n.norm() <= 0.0) throw std::invalid_argument("halfspaces: zero normal");
  }
  FeasibleSet s;
  s.kind_ = SetKind::HalfspaceIntersection;
  s.dim_ = dim;
  s.normals_ = std::move(normals);
  s.offsets_ = std::move(offsets);
  s.vertices_ = enumerate_vertices(s.normals_, s.offsets_, dim);
  if (s.vertices_.empty())
    throw std::invalid_argument(
        "halfspaces: no vertices found (empty or unbounded intersection)");
  Vector c = Vector::Zero(dim);
  for (const auto& v : s.vertices_) c += v;
  s.witness_ = c / static_cast<double>(s.vertices_.size());
  return s;
}

FeasibleSet FeasibleSet::ball(Vector center, double radius) {
  if (center.size() == 0) throw std::invalid_argument("ball: empty center");
  if (!(radius >= 0.0) || !std::isfinite(radius))
    throw std::invalid_argument("ball: radius must be nonnegative");
  FeasibleSet s;
  s.kind_ = SetKind::Ball;
  s.dim_ = static_cast<int>(center.size());
  s.radius_ = radius;
  s.center_ = std::move(center);
  s.witness_ = s.center_;
  return s;
}

Vector FeasibleSet::project(const Vector& p) const {
  check_dim(p);
  if (!all_finite(p)) throw std::invalid_argument("project: non-finite point");
  switch (kind_) {
    case SetKind::Box:
      return p.cwiseMax(lower_).cwiseMin(upper_);
    case SetKind::Ball: {
      const Vector d = p - center_;
      const double n = d.norm();
      if (n <= radius_) return p;
      return center_ + (radius_ / n) * d;
    }
    case SetKind::Simplex: {
      // nearest point on {x >= 0, sum(x) = radius} via the sorted threshold
      std::vector<double> u(p.data(), p.data() + p.size());
      std::sort(u.begin(), u.end(), std::greater<double>());
      double cssv = 0.0, tau = 0.0;
      int rho = 0;
      for (int i = 0; i < dim_; ++i) {
        cssv += u[i];
        const double t = (cssv - radius_) / (i + 1);
        if (u[i] - t > 0.0) {
          rho = i + 1;
          tau = t;
        }
      }
      (void)rho;
      return (p.array() - tau).cwiseMax(0.0).matrix();
    }
    case SetKind::HalfspaceIntersection: {
      const int m = static_cast<int>(normals_.size());
      auto feasible = [&](const Vector& x) {
        for (int i = 0; i < m; ++i)
          if (normals_[i].dot(x) >
              offsets_[i] + 1e-9 * (1.0 + std::abs(offsets_[i])))
            return false;
        return true;
      };
      if (feasible(p)) return p;
      double best = std::numeric_limits<double>::infinity();
      Vector bestx;
      // active-set enumeration: project onto every face subsystem with
      // consistent KKT multipliers, keep the nearest feasible candidate
      const int max_active = std::min(m, dim_);
      std::vector<int> subset;
      auto consider = [&](const std::vector<int>& act) {
        const int k = static_cast<int>(act.size());
        Eigen::MatrixXd N(k, dim_);
        Vector b(k);
        for (int r = 0; r < k; ++r) {
          N.row(r) = normals_[act[r]].transpose();
          b[r] = offsets_[act[r]];
        }
        Eigen::MatrixXd G = N * N.transpose();
        Eigen::FullPivLU<Eigen::MatrixXd> lu(G);
        if (!lu.isInvertible()) return;
        Vector lambda = lu.solve(N * p - b);
        if ((lambda.array() < -1e-12).any()) return;
        Vector y = p - N.transpose() * lambda;
        if (!y.allFinite() || !feasible(y)) return;
        const double d = (y - p).norm();
        if (d < best) {
          best = d;
          bestx = y;
        }
      };
      // all nonempty subsets of size <= dim
      std::vector<int> stack;
      std::function<void(int)> rec = [&](int start) {
        if (!stack.empty()) consider(stack);
        if (static_cast<int>(stack.size()) == max_active) return;
        for (int i = start; i < m; ++i) {
          stack.push_back(i);
          rec(i + 1);
          stack.pop_back();
        }
      };
      rec(0);
      if (bestx.size() == 0) {
        // degenerate geometry; fall back to the nearest vertex
        for (const auto& v : vertices_) {
          const double d = (v - p).norm();
          if (d < best) {
            best = d;
            bestx = v;
          }
        }
      }
      return bestx;
    }
  }
  throw std::logic_error("unreachable");
}

bool FeasibleSet::contains(const Vector& p, double tol) const {
  check_dim(p);
  if (tol < 0.0) throw std::invalid_argument("contains: negative tolerance");
  if (!all_finite(p)) return false;
  return (p - project(p)).norm() <= tol;
}

double FeasibleSet::support(const Vector& direction) const {
  check_dim(direction);
  if (!all_finite(direction))
    throw std::invalid_argument("support: non-finite direction");
  switch (kind_) {
    case SetKind::Box: {
      double s = 0.0;
      for (int i = 0; i < dim_; ++i)
        s += std::max(direction[i] * lower_[i], direction[i] * upper_[i]);
      return s;
    }
    case SetKind::Simplex:
      return radius_ * direction.maxCoeff();
    case SetKind::Ball:
      return direction.dot(center_) + radius_ * direction.norm();
    case SetKind::HalfspaceIntersection: {
      double s = -std::numeric_limits<double>::infinity();
      for (const auto& v : vertices_) s = std::max(s, direction.dot(v));
      return s;
    }
  }
  throw std::logic_error("unreachable");
}

bool FeasibleSet::strictly_interior(const Vector& p, double margin) const {
  check_dim(p);
  if (!all_finite(p)) return false;
  switch (kind_) {
    case SetKind::Box:
      for (int i = 0; i < dim_; ++i) {
        const double span = upper_[i] - lower_[i];
        if (!(p[i] > lower_[i] + margin * span && p[i] < upper_[i] - margin * span))
          return false;
      }
      return true;
    case SetKind::Simplex: {
      if (std::abs(p.sum() - radius_) > 1e-12 * std::max(1.0, radius_))
        return false;
      return (p.array() > margin * radius_).all();
    }
    case SetKind::Ball:
      return (p - center_).norm() < radius_ * (1.0 - margin);
    case SetKind::HalfspaceIntersection: {
      const auto [lo, hi] = bounding_box();
      const double scale = std::max(1e-12, (hi - lo).norm());
      for (std::size_t i = 0; i < normals_.size(); ++i)
        if (!(offsets_[i] - normals_[i].dot(p) > margin * scale * normals_[i].norm()))
          return false;
      return true;
    }
  }
  throw std::logic_error("unreachable");
}

Vector FeasibleSet::sample_interior(std::mt19937_64& rng, double margin) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (kind_) {
    case SetKind::Box: {
      Vector x(dim_);
      for (int i = 0; i < dim_; ++i) {
        const double span = upper_[i] - lower_[i];
        if (span <= 0.0)
          throw std::invalid_argument("sample_interior: set has empty interior");
        x[i] = lower_[i] + span * (margin + (1.0 - 2.0 * margin) * unit(rng));
      }
      return x;
    }
    case SetKind::Simplex: {
      // exponential spacings give a uniform point on the simplex; blending
      // with the barycenter keeps every coordinate >= margin * radius
      std::exponential_distribution<double> ex(1.0);
      Vector w(dim_);
      for (int i = 0; i < dim_; ++i) w[i] = ex(rng);
      w /= w.sum();
      const double beta = margin * dim_;
      if (beta >= 1.0)
        throw std::invalid_argument("sample_interior: margin too large");
      return radius_ * ((1.0 - beta) * w.array() + margin).matrix();
    }
    case SetKind::Ball: {
      if (radius_ <= 0.0)
        throw std::invalid_argument("sample_interior: set has empty interior");
      std::normal_distribution<double> gauss(0.0, 1.0);
      Vector d(dim_);
      for (int i = 0; i < dim_; ++i) d[i] = gauss(rng);
      const double n = d.norm();
      if (n == 0.0) return center_;
      const double r =
          radius_ * (1.0 - margin) * std::pow(unit(rng), 1.0 / dim_);
      return center_ + (r / n) * d;
    }
    case SetKind::HalfspaceIntersection: {
      std::exponential_distribution<double> ex(1.0);
      for (int attempt = 0; attempt < 128; ++attempt) {
        Vector w(static_cast<Eigen::Index>(vertices_.size()));
        for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = ex(rng);
        w /= w.sum();
        Vector x = Vector::Zero(dim_);
        for (std::size_t i = 0; i < vertices_.size(); ++i) x += w[i] * vertices_[i];
        x = (1.0 - margin) * x + margin * witness_;
        if (strictly_interior(x, margin * 1e-3)) return x;
      }
      throw std::invalid_argument("sample_interior: set has empty interior");
    }
  }
  throw std::logic_error("unreachable");
}

std::pair<Vector, Vector> FeasibleSet::bounding_box() const {
  switch (kind_) {
    case SetKind::Box:
      return {lower_, upper_};
    case SetKind::Simplex:
      return {Vector::Zero(dim_), Vector::Constant(dim_, radius_)};
    case SetKind::Ball:
      return {center_.array() - radius_, center_.array() + radius_};
    case SetKind::HalfspaceIntersection: {
      Vector lo = vertices_[0], hi = vertices_[0];
      for (const auto& v : vertices_) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
      }
      return {lo, hi};
    }
  }
  throw std::logic_error("unreachable");
}

const std::vector<Vector>& FeasibleSet::vertices() const {
  if (vertices_.empty())
    throw std::invalid_argument("vertices: not available for this set");
  return vertices_;
}

}  // namespace bepsolve
