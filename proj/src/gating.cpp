#include "difflab/gating.hpp"

#include <cmath>
#include <stdexcept>

namespace difflab {

GateSpec::GateSpec(double delta, Vocab vocab) : delta(delta), vocab(vocab) {
  const double upper = 1.0 - 1.0 / vocab.size();
  if (!(delta > 0.0) || delta > upper)
    throw std::invalid_argument("GateSpec: delta must lie in (0, 1 - 1/|V|]");
}

double binary_entropy(double delta) {
  if (!(delta >= 0.0) || delta > 1.0)
    throw std::invalid_argument("binary_entropy: delta must lie in [0, 1]");
  double h = 0.0;
  if (delta > 0.0) h -= delta * std::log(delta);
  if (delta < 1.0) h -= (1.0 - delta) * std::log(1.0 - delta);
  return h;
}

double gate_entropy(double delta, Vocab vocab) {
  const double upper = 1.0 - 1.0 / vocab.size();
  if (!(delta >= 0.0) || delta > upper + 1e-15)
    throw std::invalid_argument("gate_entropy: delta must lie in [0, 1 - 1/|V|]");
  return binary_entropy(delta) + delta * std::log(static_cast<double>(vocab.size() - 1));
}

double max_entropy_given_top(double top, Vocab vocab) {
  if (!(top >= 1.0 / vocab.size()) || top > 1.0)
    throw std::invalid_argument("max_entropy_given_top: top must lie in [1/|V|, 1]");
  double h = 0.0;
  if (top < 1.0) {
    const double tail = 1.0 - top;
    h -= tail * std::log(tail / (vocab.size() - 1));
  }
  if (top > 0.0) h -= top * std::log(top);
  return h;
}

GateBounds entropy_cap(int length, double delta, Vocab vocab) {
  if (length < 1) throw std::invalid_argument("entropy_cap: length must be at least 1");
  const double hv = gate_entropy(delta, vocab);
  return GateBounds{binary_entropy(delta), hv, length * hv, std::exp(hv)};
}

double delta_from_entropy(double eps, Vocab vocab) {
  const double h_max = std::log(static_cast<double>(vocab.size()));
  if (!(eps >= 0.0) || eps > h_max + 1e-12)
    throw std::invalid_argument("delta_from_entropy: eps must lie in [0, log |V|]");
  if (eps == 0.0) return 0.0;
  if (eps >= h_max) return 1.0 - 1.0 / vocab.size();

  // max_entropy_given_top is strictly decreasing on [1/|V|, 1], from log|V| to 0.
  double lo = 1.0 / vocab.size();
  double hi = 1.0;
  for (int iter = 0; iter < 200 && hi - lo > 1e-12; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (max_entropy_given_top(mid, vocab) > eps)
      lo = mid;
    else
      hi = mid;
  }
  return 1.0 - 0.5 * (lo + hi);
}

double delta_from_margin(double gamma, Vocab vocab) {
  if (!(gamma >= 0.0) || gamma > 1.0)
    throw std::invalid_argument("delta_from_margin: gamma must lie in [0, 1]");
  return (vocab.size() - 1) * (1.0 - gamma) / vocab.size();
}

bool is_gated(const Eigen::Ref<const ArrayXd>& p, double delta) {
  return p.maxCoeff() >= 1.0 - delta;
}

}  // namespace difflab
