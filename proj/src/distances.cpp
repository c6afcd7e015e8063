#include "bepsolve/distances.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace bepsolve {

ProximalPair build_euclidean_pair() {
  ProximalPair p;
  p.label = "euclidean";
  p.gamma = 1.0;
  p.whole_space = true;
  p.d = [](const Vector& x, const Vector& y) { return 0.5 * (x - y).squaredNorm(); };
  p.grad1 = [](const Vector& x, const Vector& y) { return Vector(x - y); };
  p.D = p.d;
  p.in_domain = [](const Vector&) { return true; };
  return p;
}

BregmanGenerator entropy_generator() {
  BregmanGenerator g;
  g.label = "entropy";
  g.whole_space = false;
  g.value = [](const Vector& x) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x[i] < 0.0) return std::numeric_limits<double>::infinity();
      if (x[i] > 0.0) s += x[i] * std::log(x[i]);
      // x_i == 0 contributes 0 (the limit of t ln t)
    }
    return s;
  };
  g.gradient = [](const Vector& x) {
    Vector grad(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (!(x[i] > 0.0))
        throw std::invalid_argument(
            "entropy gradient undefined at a nonpositive coordinate");
      grad[i] = std::log(x[i]) + 1.0;
    }
    return grad;
  };
  g.in_domain = [](const Vector& x) { return (x.array() > 0.0).all(); };
  return g;
}

BregmanGenerator quadratic_generator() {
  BregmanGenerator g;
  g.label = "quadratic";
  g.whole_space = true;
  g.value = [](const Vector& x) { return 0.5 * x.squaredNorm(); };
  g.gradient = [](const Vector& x) { return x; };
  g.in_domain = [](const Vector&) { return true; };
  return g;
}

ProximalPair build_bregman_pair(const BregmanGenerator& gen) {
  if (!gen.value || !gen.gradient || !gen.in_domain)
    throw std::invalid_argument("bregman pair: generator is incomplete");
  ProximalPair p;
  p.label = gen.label;
  p.gamma = 1.0;
  p.whole_space = gen.whole_space;
  p.in_domain = gen.in_domain;
  p.d = [gen](const Vector& x, const Vector& y) {
    if (!gen.in_domain(y))
      throw std::invalid_argument(
          "bregman distance: second argument outside the generator domain");
    const double vx = gen.value(x);
    if (!std::isfinite(vx)) return std::numeric_limits<double>::infinity();
    return vx - gen.value(y) - gen.gradient(y).dot(x - y);
  };
  p.grad1 = [gen](const Vector& x, const Vector& y) {
    return Vector(gen.gradient(x) - gen.gradient(y));
  };
  p.D = p.d;

  // wiring sanity: the diagonal must be an exact zero of d and grad1
  Vector probe = vec({0.375, 0.625});
  if (gen.in_domain(probe)) {
    if (std::abs(p.d(probe, probe)) > 1e-12 ||
        p.grad1(probe, probe).cwiseAbs().maxCoeff() > 1e-12)
      throw std::logic_error("bregman pair: generator fails the diagonal check");
  }
  return p;
}

double h4_slack(const ProximalPair& pair, const Vector& x, const Vector& y,
                const Vector& z) {
  return pair.D(z, y) - pair.D(z, x) - pair.gamma * pair.D(x, y) -
         (z - x).dot(pair.grad1(x, y));
}

HReport verify_proximal_pair(const ProximalPair& pair, const FeasibleSet& K,
                             int samples, std::uint64_t seed) {
  if (samples < 3) throw std::invalid_argument("verify: need at least 3 samples");
  HReport r;
  r.samples = samples;

  std::mt19937_64 rng(seed);
  std::vector<Vector> xs;
  xs.reserve(samples);
  for (int i = 0; i < samples; ++i) xs.push_back(K.sample_interior(rng, 1e-3));

  for (const auto& x : xs)
    if (!pair.in_domain(x)) {
      r.domain_ok = false;
      r.domain_witness = x;
      return r;
    }

  // diagonal: d(x, x) == 0 and grad1(x, x) == 0
  for (const auto& x : xs) {
    const double dx = pair.d(x, x);
    if (std::abs(dx) > 1e-12) {
      r.h2.ok = false;
      if (dx < r.h2.min_slack) {
        r.h2.min_slack = dx;
        r.h2.witness = {x, x};
      }
    }
    r.grad_diag_worst =
        std::max(r.grad_diag_worst, pair.grad1(x, x).cwiseAbs().maxCoeff());
  }

  std::uniform_int_distribution<int> pick(0, samples - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // H2 off the diagonal: strict positivity
  for (int t = 0; t < samples; ++t) {
    int i = pick(rng), j = pick(rng);
    if (i == j) continue;
    const double v = pair.d(xs[i], xs[j]);
    if (v < r.h2.min_slack) {
      r.h2.min_slack = v;
      r.h2.witness = {xs[i], xs[j]};
    }
    if (!(v > 0.0)) r.h2.ok = false;
  }

  // H4: three-point inequality
  for (int t = 0; t < 2 * samples; ++t) {
    const Vector &x = xs[pick(rng)], &y = xs[pick(rng)], &z = xs[pick(rng)];
    const double s = h4_slack(pair, x, y, z);
    if (s < r.h4.min_slack) {
      r.h4.min_slack = s;
      r.h4.witness = {x, y, z};
    }
  }
  r.h4.ok = r.h4.min_slack >= -1e-9;

  // H6: convexity of d(., y) along segments between interior samples
  for (int t = 0; t < 2 * samples; ++t) {
    const Vector &a = xs[pick(rng)], &b = xs[pick(rng)], &y = xs[pick(rng)];
    const double alpha = unit(rng);
    const Vector mix = alpha * a + (1.0 - alpha) * b;
    const double s =
        alpha * pair.d(a, y) + (1.0 - alpha) * pair.d(b, y) - pair.d(mix, y);
    if (s < r.h6.min_slack) {
      r.h6.min_slack = s;
      r.h6.witness = {a, b, y};
    }
  }
  r.h6.ok = r.h6.min_slack >= -1e-9;

  return r;
}

}  // namespace bepsolve
