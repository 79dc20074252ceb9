#pragma once

// Test-side oracles, kept independent of the library code paths they check.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "difflab/model.hpp"
#include "difflab/rng.hpp"

namespace difflab::testing {

/// Regularized lower incomplete gamma P(a, x), series + continued fraction.
inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - gln) * h;
}

inline double chi_square_p_value(double statistic, int dof) {
  return 1.0 - gamma_p(0.5 * dof, 0.5 * statistic);
}

/// Maximizes Shannon entropy over the simplex subject to p(0) >= 1 - delta,
/// by projected gradient ascent. Independent of the closed form it checks.
inline double max_gated_entropy_numeric(double delta, int vocab) {
  const double spike = 1.0 - delta;
  Eigen::ArrayXd p = Eigen::ArrayXd::Constant(vocab, 1.0 / vocab);
  p(0) = spike;
  for (int i = 1; i < vocab; ++i) p(i) = (1.0 - spike) / (vocab - 1) * (1.0 + 0.3 * std::sin(i));
  p.tail(vocab - 1) *= (1.0 - spike) / p.tail(vocab - 1).sum();

  double step = 0.1;
  auto objective = [](const Eigen::ArrayXd& q) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < q.size(); ++i)
      if (q(i) > 0.0) h -= q(i) * std::log(q(i));
    return h;
  };
  double best = objective(p);
  for (int iter = 0; iter < 4000; ++iter) {
    Eigen::ArrayXd grad(vocab);
    for (int i = 0; i < vocab; ++i) grad(i) = -(std::log(std::max(p(i), 1e-300)) + 1.0);
    Eigen::ArrayXd q = p + step * grad;
    // project: clamp the spike constraint, renormalize the tail onto its mass
    q = q.max(1e-12);
    q(0) = std::max(q(0), spike);
    const double tail_mass = 1.0 - q(0);
    q.tail(vocab - 1) *= tail_mass / q.tail(vocab - 1).sum();
    const double val = objective(q);
    if (val > best) {
      best = val;
      p = q;
    } else {
      step *= 0.7;
      if (step < 1e-12) break;
    }
  }
  return best;
}

/// Smallest achievable top probability subject to top1 - top2 >= gamma,
/// scanned on a (top1, top2) grid with the remaining mass spread feasibly.
inline double min_top_given_margin_grid(double gamma, int vocab, double resolution) {
  const int cells = static_cast<int>(std::lround(1.0 / resolution));
  for (int ia = 0; ia <= cells; ++ia) {
    const double a = static_cast<double>(ia) / cells;
    if (a * vocab + 1e-12 < 1.0) continue;
    for (int ib = 0; ib <= ia; ++ib) {
      const double b = static_cast<double>(ib) / cells;
      if (a - b < gamma) break;
      const double rest = 1.0 - a - b;
      if (rest < -1e-12) continue;
      if (vocab == 2) {
        if (std::abs(rest) <= 0.5 * resolution) return a;
        continue;
      }
      if (rest <= (vocab - 2) * b + 1e-12) return a;
    }
  }
  return 1.0;
}

/// Brute-force conditional over a raw probability table, bypassing the
/// library's state-mass machinery.
inline Eigen::ArrayXd brute_force_conditional(const Eigen::ArrayXd& probs, int vocab, int length,
                                              const std::vector<int>& committed_positions,
                                              const std::vector<int>& committed_tokens,
                                              int position) {
  const std::int64_t n = probs.size();
  Eigen::ArrayXd mass = Eigen::ArrayXd::Zero(vocab);
  for (std::int64_t idx = 0; idx < n; ++idx) {
    std::vector<int> tokens(static_cast<std::size_t>(length));
    std::int64_t rem = idx;
    for (int p = length - 1; p >= 0; --p) {
      tokens[static_cast<std::size_t>(p)] = static_cast<int>(rem % vocab);
      rem /= vocab;
    }
    bool consistent = true;
    for (std::size_t k = 0; k < committed_positions.size(); ++k)
      consistent = consistent &&
                   tokens[static_cast<std::size_t>(committed_positions[k])] == committed_tokens[k];
    if (consistent) mass(tokens[static_cast<std::size_t>(position)]) += probs(idx);
  }
  return mass / mass.sum();
}

/// Exhaustive subset oracle: fraction of the C(n, k) equally likely subsets
/// that contain at least one of the first c (correct) samples.
inline double pass_at_k_by_enumeration(int n, int c, int k) {
  std::vector<int> choose(static_cast<std::size_t>(k), 0);
  for (int i = 0; i < k; ++i) choose[static_cast<std::size_t>(i)] = i;
  std::int64_t total = 0, hit = 0;
  for (;;) {
    ++total;
    bool any = false;
    for (int i : choose) any = any || i < c;
    hit += any;
    int d = k - 1;
    while (d >= 0 && choose[static_cast<std::size_t>(d)] == n - k + d) --d;
    if (d < 0) break;
    ++choose[static_cast<std::size_t>(d)];
    for (int j = d + 1; j < k; ++j)
      choose[static_cast<std::size_t>(j)] = choose[static_cast<std::size_t>(j - 1)] + 1;
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

struct KsResult {
  double statistic;
  double threshold_5pct;
};

/// One-sample Kolmogorov-Smirnov distance to Uniform[0, 1].
inline KsResult ks_uniform(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double cdf = values[i];
    d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
    d = std::max(d, std::abs(cdf - static_cast<double>(i + 1) / n));
  }
  return KsResult{d, 1.36 / std::sqrt(n)};
}

}  // namespace difflab::testing
