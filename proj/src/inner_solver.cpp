#include "bepsolve/inner_solver.hpp"

#include <cmath>
#include <stdexcept>

#include "bepsolve/oracle.hpp"

namespace bepsolve {

namespace {

void require_finite(double v, const Vector& at, const char* what) {
  if (!std::isfinite(v))
    throw NumericalError(std::string(what) + " produced a non-finite value", at);
}

void require_finite(const Vector& v, const Vector& at, const char* what) {
  if (!v.allFinite())
    throw NumericalError(std::string(what) + " produced a non-finite value", at);
}

// fixed, seedless probe points used to size gradient steps
std::vector<Vector> probe_points(const FeasibleSet& K, const Vector& x0) {
  auto [lo, hi] = K.bounding_box();
  std::vector<Vector> pts{K.project(x0), K.interior_witness()};
  for (int i = 0; i < K.dimension(); ++i) {
    const double span = hi[i] - lo[i];
    if (span <= 0.0) continue;
    Vector e = Vector::Zero(K.dimension());
    e[i] = 1.0;
    pts.push_back(K.project(x0 + (span / 3.0) * e));
    pts.push_back(K.project(x0 - (span / 7.0) * e));
    pts.push_back(K.project(K.interior_witness() + (span / 5.0) * e));
  }
  return pts;
}

double slope_bound(const std::function<Vector(const Vector&)>& g,
                   const std::vector<Vector>& pts) {
  // Probe points can fall outside the domain of a restricted gradient
  // (entropy-type distances reject boundary points); skip those.
  std::vector<Vector> usable;
  std::vector<Vector> grads;
  for (const Vector& p : pts) {
    try {
      grads.push_back(g(p));
      usable.push_back(p);
    } catch (const std::invalid_argument&) {
    }
  }
  double L = 0.0;
  for (std::size_t i = 0; i + 1 < usable.size(); ++i) {
    const double h = (usable[i + 1] - usable[i]).norm();
    if (h < 1e-12) continue;
    L = std::max(L, (grads[i + 1] - grads[i]).norm() / h);
  }
  return L;
}

struct PGResult {
  Vector x;
  int iterations = 0;
  bool stalled = false;
};

PGResult pg_minimize(const std::function<double(const Vector&)>& value,
                     const std::function<Vector(const Vector&)>& grad,
                     const FeasibleSet& K, const Vector& x0, double c0,
                     int max_iter, double xtol) {
  PGResult r;
  r.x = K.project(x0);
  double fx = value(r.x);
  require_finite(fx, r.x, "objective");
  double c = c0;
  for (int it = 0; it < max_iter; ++it) {
    r.iterations = it + 1;
    Vector g;
    try {
      g = grad(r.x);
    } catch (const std::invalid_argument&) {
      // the iterate reached the boundary of a restricted gradient domain;
      // no descent information left to exploit there
      r.stalled = true;
      break;
    }
    require_finite(g, r.x, "gradient");
    Vector xn;
    double fn = 0.0;
    while (true) {
      xn = K.project(r.x - c * g);
      fn = value(xn);
      require_finite(fn, xn, "objective");
      const Vector dxn = xn - r.x;
      if (fn <= fx + g.dot(dxn) + (0.5 / c) * dxn.squaredNorm() +
                    1e-15 * (1.0 + std::abs(fx)))
        break;
      c *= 0.5;
      if (c < 1e-14) {  // no admissible step left at this point
        xn = r.x;
        fn = fx;
        break;
      }
    }
    const double step = (xn - r.x).norm();
    r.x = xn;
    fx = fn;
    if (step <= xtol * (1.0 + r.x.norm())) {
      r.stalled = true;
      break;
    }
    c = std::min(c * 1.25, 1e2);
  }
  return r;
}

std::function<Vector(const Vector&, const Vector&)> grad_y_or_fd(
    const Bifunction& f) {
  if (f.grad_y) return f.grad_y;
  auto eval = f.eval;
  return [eval](const Vector& x, const Vector& y) {
    Vector g(y.size());
    Vector yp = y, ym = y;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double h = 1e-6 * (1.0 + std::abs(y[i]));
      yp[i] = y[i] + h;
      ym[i] = y[i] - h;
      g[i] = (eval(x, yp) - eval(x, ym)) / (2.0 * h);
      yp[i] = y[i];
      ym[i] = y[i];
    }
    return g;
  };
}

}  // namespace

ProbeSpec ProbeSpec::automatic(const FeasibleSet& K) {
  ProbeSpec p;
  if (K.dimension() <= 3) {
    p.kind = Kind::Grid;
    auto [lo, hi] = K.bounding_box();
    const double span = (hi - lo).maxCoeff();
    p.step = span > 0.0 ? span / 50.0 : 1.0;
  } else {
    p.kind = Kind::Minimize;
  }
  return p;
}

double ep_residual(const Bifunction& f, const FeasibleSet& K, const Vector& x,
                   const ProbeSpec& probe) {
  if (!f.eval) throw std::invalid_argument("ep_residual: bifunction has no eval");
  if (!K.contains(x, 1e-9))
    throw std::invalid_argument("ep_residual: point not in feasible set");

  if (probe.kind == ProbeSpec::Kind::Grid) {
    GridSpec g = GridSpec::from_set(K, probe.step);
    const double mtol = membership_tol(K, g);
    double worst = 0.0;  // f(x, x) == 0 keeps the infimum at or below zero
    for (auto& y : grid_points(g)) {
      if (!K.contains(y, mtol)) continue;
      // weak members of a non-box set sit just off the set; pull them on so
      // the probe never reports violations that are infeasible
      if (K.kind() != SetKind::Box) y = K.project(y);
      const double v = f.eval(x, y);
      require_finite(v, y, "bifunction");
      worst = std::min(worst, v);
    }
    return -worst;
  }

  // minimization probe: push f(x, .) down over K by projected gradient
  auto eval = f.eval;
  auto gy = grad_y_or_fd(f);
  auto value = [eval, &x](const Vector& y) { return eval(x, y); };
  auto grad = [gy, &x](const Vector& y) { return gy(x, y); };
  const double L = slope_bound(grad, probe_points(K, x));
  const double c0 = L > 0.0 ? std::clamp(1.0 / L, 1e-4, 1e2) : 1.0;
  auto pg = pg_minimize(value, grad, K, x, c0, 500, 1e-12);
  return std::max(0.0, -value(pg.x));
}

double ep_residual(const Bifunction& f, const FeasibleSet& K, const Vector& x) {
  return ep_residual(f, K, x, ProbeSpec::automatic(K));
}

InnerResult solve_ep(const Bifunction& f, const FeasibleSet& K,
                     const Vector& x0, const InnerSolveOptions& opts,
                     const std::optional<ProbeSpec>& probe) {
  if (!f.eval) throw std::invalid_argument("solve_ep: bifunction has no eval");
  if (!(opts.tol >= 0.0)) throw std::invalid_argument("solve_ep: negative tol");
  if (opts.max_iter <= 0) throw std::invalid_argument("solve_ep: max_iter < 1");
  if (!K.contains(x0, 1e-9))
    throw std::invalid_argument("solve_ep: starting point not in feasible set");

  const bool has_objective =
      f.variational_objective && f.variational_objective->value;
  bool fast = false;
  switch (opts.mode) {
    case InnerMode::Auto:
      fast = has_objective;
      break;
    case InnerMode::ObjectiveFastPath:
      if (!has_objective)
        throw std::invalid_argument(
            "solve_ep: fast path requires an objective-structured bifunction");
      fast = true;
      break;
    case InnerMode::Extragradient:
      fast = false;
      break;
  }

  InnerResult out;
  Vector x = K.project(x0);

  if (fast) {
    ScalarField T = *f.variational_objective;
    if (!T.gradient) T = make_scalar_field(T.value);
    double c0 = opts.prox_step;
    if (!(c0 > 0.0)) {
      const double L = slope_bound(T.gradient, probe_points(K, x));
      c0 = L > 0.0 ? std::clamp(1.0 / L, 1e-4, 1e2) : 1.0;
    }
    auto pg = pg_minimize(T.value, T.gradient, K, x, c0, opts.max_iter, 1e-13);
    x = pg.x;
    out.iterations = pg.iterations;
  } else {
    auto gy = grad_y_or_fd(f);
    double c = opts.prox_step;
    if (!(c > 0.0)) {
      // slope of the diagonal operator x -> grad_y f(x, .)|_{y=x}
      auto diag = [&gy](const Vector& p) { return gy(p, p); };
      const double L = slope_bound(diag, probe_points(K, x));
      c = L > 0.0 ? std::clamp(0.5 / L, 1e-4, 1e2) : 1.0;
    }

    auto prox = [&](const Vector& at, const Vector& center) {
      // argmin_v f(at, v) + (1/2c) |v - center|^2 over K
      if (f.field) {
        const Vector Fv = f.field(at);
        require_finite(Fv, at, "operator");
        return K.project(center - c * Fv);
      }
      auto eval = f.eval;
      auto value = [eval, &at, &center, this_c = c](const Vector& v) {
        return eval(at, v) + (0.5 / this_c) * (v - center).squaredNorm();
      };
      auto grad = [&gy, &at, &center, this_c = c](const Vector& v) {
        return Vector(gy(at, v) + (v - center) / this_c);
      };
      return pg_minimize(value, grad, K, center, c, 200, 1e-14).x;
    };

    for (int it = 0; it < opts.max_iter; ++it) {
      out.iterations = it + 1;
      const Vector y = prox(x, x);
      const Vector xn = prox(y, x);
      require_finite(xn, x, "proximal step");
      const double step = (xn - x).norm();
      x = xn;
      if (step <= 1e-13 * (1.0 + x.norm())) break;
    }
  }

  out.x = x;
  out.residual = ep_residual(f, K, x, probe ? *probe : ProbeSpec::automatic(K));
  out.converged = out.residual <= opts.tol;
  return out;
}

}  // namespace bepsolve
