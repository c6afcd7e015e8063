#include "bepsolve/bifunctions.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace bepsolve {

ScalarField make_scalar_field(std::function<double(const Vector&)> value) {
  if (!value) throw std::invalid_argument("scalar field: missing value function");
  ScalarField f;
  f.value = value;
  f.gradient = [value](const Vector& x) {
    Vector g(x.size());
    Vector xp = x, xm = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double h = 1e-6 * (1.0 + std::abs(x[i]));
      xp[i] = x[i] + h;
      xm[i] = x[i] - h;
      g[i] = (value(xp) - value(xm)) / (2.0 * h);
      xp[i] = x[i];
      xm[i] = x[i];
    }
    return g;
  };
  return f;
}

ScalarField make_scalar_field(std::function<double(const Vector&)> value,
                              std::function<Vector(const Vector&)> gradient) {
  if (!value || !gradient)
    throw std::invalid_argument("scalar field: missing value or gradient");
  ScalarField f;
  f.value = std::move(value);
  f.gradient = std::move(gradient);
  return f;
}

Bifunction from_objective(ScalarField g, Convention convention,
                          std::string label) {
  if (!g.value) throw std::invalid_argument("from_objective: missing value");
  if (!g.gradient) g = make_scalar_field(g.value);

  ScalarField G;  // canonical objective: equilibria minimize it
  if (convention == Convention::Advantage) {
    G = g;
  } else {
    auto v = g.value;
    auto gr = g.gradient;
    G.value = [v](const Vector& x) { return -v(x); };
    G.gradient = [gr](const Vector& x) { return Vector(-gr(x)); };
  }

  Bifunction f;
  f.label = std::move(label);
  auto Gv = G.value;
  f.eval = [Gv](const Vector& x, const Vector& y) { return Gv(y) - Gv(x); };
  f.difference_objective = G;
  f.variational_objective = G;
  auto Gg = G.gradient;
  f.grad_y = [Gg](const Vector&, const Vector& y) { return Gg(y); };
  return f;
}

Bifunction from_operator(std::function<Vector(const Vector&)> F,
                         std::string label) {
  if (!F) throw std::invalid_argument("from_operator: missing operator");
  Bifunction f;
  f.label = std::move(label);
  f.eval = [F](const Vector& x, const Vector& y) { return F(x).dot(y - x); };
  f.field = F;
  f.grad_y = [F](const Vector& x, const Vector&) { return F(x); };
  return f;
}

LReport verify_standard_assumptions(const Bifunction& f, const FeasibleSet& K,
                                    int samples, std::uint64_t seed) {
  if (!f.eval) throw std::invalid_argument("verify: bifunction has no eval");
  if (samples < 3) throw std::invalid_argument("verify: need at least 3 samples");
  LReport r;
  r.samples = samples;
  r.l5_note =
      "closedness of the solution map is not sample-checkable; it holds for "
      "continuous bifunctions over a compact feasible set";

  std::mt19937_64 rng(seed);
  std::vector<Vector> xs;
  xs.reserve(samples);
  for (int i = 0; i < samples; ++i) xs.push_back(K.sample_interior(rng, 1e-3));

  // L1: the diagonal vanishes.  Slack is -|psi(x, x)|.
  for (const auto& x : xs) {
    const double v = f.eval(x, x);
    if (!std::isfinite(v)) {
      r.l2_finite = false;
      r.l2_witness = {x, x};
      continue;
    }
    const double slack = -std::abs(v);
    if (slack < r.l1.min_slack) {
      r.l1.min_slack = slack;
      r.l1.witness = {x};
    }
  }
  r.l1.ok = r.l1.min_slack >= -1e-9;

  std::uniform_int_distribution<int> pick(0, samples - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // L2 + L4 on sampled pairs
  for (int t = 0; t < 2 * samples; ++t) {
    const Vector &x = xs[pick(rng)], &y = xs[pick(rng)];
    const double a = f.eval(x, y), b = f.eval(y, x);
    if (!std::isfinite(a) || !std::isfinite(b)) {
      r.l2_finite = false;
      r.l2_witness = {x, y};
      continue;
    }
    const double slack = -(a + b);
    if (slack < r.l4.min_slack) {
      r.l4.min_slack = slack;
      r.l4.witness = {x, y};
    }
  }
  r.l4.ok = r.l4.min_slack >= -1e-9;

  // L3: convexity of psi(x, .) along sampled segments
  for (int t = 0; t < 2 * samples; ++t) {
    const Vector &x = xs[pick(rng)], &a = xs[pick(rng)], &b = xs[pick(rng)];
    const double alpha = unit(rng);
    const Vector mix = alpha * a + (1.0 - alpha) * b;
    const double slack = alpha * f.eval(x, a) + (1.0 - alpha) * f.eval(x, b) -
                         f.eval(x, mix);
    if (!std::isfinite(slack)) {
      r.l2_finite = false;
      r.l2_witness = {x, a};
      continue;
    }
    if (slack < r.l3.min_slack) {
      r.l3.min_slack = slack;
      r.l3.witness = {x, a, b};
    }
  }
  r.l3.ok = r.l3.min_slack >= -1e-9;

  return r;
}

Bifunction regularize(const Bifunction& f, const Bifunction& h, double eps,
                      double lambda, const ProximalPair& pair,
                      const Vector& anchor) {
  if (!f.eval || !h.eval)
    throw std::invalid_argument("regularize: bifunction has no eval");
  if (!(eps > 0.0) || !std::isfinite(eps))
    throw std::invalid_argument("regularize: eps must be positive");
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("regularize: lambda must be positive");
  if (!pair.anchor_ok(anchor))
    throw std::invalid_argument(
        "regularize: anchor outside the domain of the proximal distance");

  const double xi = 1.0 / lambda;

  Bifunction out;
  out.label = "regularized(" + f.label + "," + h.label + ")";
  auto fe = f.eval;
  auto he = h.eval;
  auto grad1 = pair.grad1;
  out.eval = [fe, he, grad1, eps, xi, anchor](const Vector& x, const Vector& y) {
    // grouped so that the worthwhile-change decomposition -(eps f + h) - xi I
    // recovers -fbar exactly, bit for bit
    return (eps * fe(x, y) + he(x, y)) + xi * grad1(x, anchor).dot(y - x);
  };

  if (f.grad_y && h.grad_y) {
    auto fg = f.grad_y;
    auto hg = h.grad_y;
    out.grad_y = [fg, hg, grad1, eps, xi, anchor](const Vector& x,
                                                  const Vector& y) {
      return Vector(eps * fg(x, y) + hg(x, y) + xi * grad1(x, anchor));
    };
  }

  if (f.difference_objective && h.difference_objective) {
    auto Gf = *f.difference_objective;
    auto Gh = *h.difference_objective;
    auto dist = pair.d;
    ScalarField T;
    T.value = [Gf, Gh, dist, eps, xi, anchor](const Vector& y) {
      return eps * Gf.value(y) + Gh.value(y) + xi * dist(y, anchor);
    };
    if (Gf.gradient && Gh.gradient) {
      T.gradient = [Gf, Gh, grad1, eps, xi, anchor](const Vector& y) {
        return Vector(eps * Gf.gradient(y) + Gh.gradient(y) +
                      xi * grad1(y, anchor));
      };
    }
    out.variational_objective = std::move(T);
  }

  return out;
}

}  // namespace bepsolve
