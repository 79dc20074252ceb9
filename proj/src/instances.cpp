#include "difflab/instances.hpp"

#include <cmath>

namespace difflab {

TabularJoint random_joint(Vocab vocab, int length, RngStream& rng, double spread) {
  const std::int64_t n = checked_state_count(vocab, length);
  ArrayXd lw(n);
  for (std::int64_t i = 0; i < n; ++i) lw(i) = spread * (2.0 * rng.uniform() - 1.0);
  return TabularJoint::from_log_unnormalized(vocab, length, std::move(lw));
}

ProductModel random_product(Vocab vocab, int length, RngStream& rng) {
  std::vector<ArrayXd> weights;
  weights.reserve(static_cast<std::size_t>(length));
  for (int p = 0; p < length; ++p) {
    ArrayXd w(vocab.size());
    for (int v = 0; v < vocab.size(); ++v) w(v) = 0.05 - std::log1p(-rng.uniform());
    weights.push_back(std::move(w));
  }
  return ProductModel(std::move(weights));
}

TabularJoint gateable_mixture(Vocab vocab, int length, double delta, RngStream& rng) {
  const int v = vocab.size();
  std::vector<Token> mode(static_cast<std::size_t>(length));
  for (Token& t : mode) t = static_cast<Token>(rng.uniform_int(static_cast<std::uint64_t>(v)));

  // Two product components peaked on the same mode; top mass stays in
  // (1 - 0.8 delta, 1 - 0.2 delta], strictly inside the gate.
  std::vector<std::vector<ArrayXd>> components(2);
  for (std::vector<ArrayXd>& comp : components) {
    comp.reserve(static_cast<std::size_t>(length));
    for (int p = 0; p < length; ++p) {
      const double top = 1.0 - delta * (0.2 + 0.6 * rng.uniform());
      ArrayXd dist(v);
      double tail_total = 0.0;
      for (int t = 0; t < v; ++t) {
        dist(t) = 0.05 - std::log1p(-rng.uniform());
        tail_total += dist(t);
      }
      const Token m = mode[static_cast<std::size_t>(p)];
      tail_total -= dist(m);
      for (int t = 0; t < v; ++t) dist(t) *= (1.0 - top) / tail_total;
      dist(m) = top;
      comp.push_back(std::move(dist));
    }
  }

  const double lambda = 0.3 + 0.4 * rng.uniform();
  const std::int64_t n = checked_state_count(vocab, length);
  ArrayXd table(n);
  for (std::int64_t idx = 0; idx < n; ++idx) {
    const Sequence x = Sequence::from_flat(idx, vocab, length);
    double p0 = 1.0, p1 = 1.0;
    for (int p = 0; p < length; ++p) {
      p0 *= components[0][static_cast<std::size_t>(p)](x[p]);
      p1 *= components[1][static_cast<std::size_t>(p)](x[p]);
    }
    table(idx) = lambda * p0 + (1.0 - lambda) * p1;
  }
  return TabularJoint::from_probabilities(vocab, length, table);
}

TabularJoint perturbed_product(Vocab vocab, int length, double noise_scale, RngStream& rng) {
  const TabularJoint base = tabular_from_product(random_product(vocab, length, rng));
  ArrayXd lw = base.log_table();
  for (std::int64_t i = 0; i < lw.size(); ++i)
    lw(i) += noise_scale * (2.0 * rng.uniform() - 1.0);
  return TabularJoint::from_log_unnormalized(vocab, length, std::move(lw));
}

}  // namespace difflab
