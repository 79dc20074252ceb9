#pragma once

#include <Eigen/Dense>

#include "difflab/model.hpp"

namespace difflab {

/// Commit gate: a distribution passes when its top probability is >= 1 - delta.
/// The useful delta range is (0, 1 - 1/|V|]; beyond it the gate is vacuous.
struct GateSpec {
  double delta;
  Vocab vocab;

  GateSpec(double delta, Vocab vocab);
};

struct GateBounds {
  double h_binary;       // nats
  double h_gate;         // nats, max entropy of a gated categorical
  double entropy_cap;    // nats, length * h_gate
  double b_eff_bound;    // exp(h_gate)
};

/// -d log d - (1-d) log(1-d); endpoints return 0.
double binary_entropy(double delta);

/// Max Shannon entropy of a categorical over |V| outcomes whose top mass is
/// at least 1 - delta: h_b(delta) + delta * log(|V| - 1).
double gate_entropy(double delta, Vocab vocab);

/// Max entropy of a categorical whose top mass equals top exactly
/// (one spike plus a uniform tail). Decreasing on [1/|V|, 1].
double max_entropy_given_top(double top, Vocab vocab);

GateBounds entropy_cap(int length, double delta, Vocab vocab);

/// The delta such that H(p) <= eps implies max p >= 1 - delta.
/// Solved by bisection to 1e-12 on the spike-plus-tail entropy curve.
double delta_from_entropy(double eps, Vocab vocab);

/// The delta such that a top-two margin >= gamma implies max p >= 1 - delta:
/// (|V| - 1)(1 - gamma) / |V|.
double delta_from_margin(double gamma, Vocab vocab);

/// Exact comparison, no tolerance.
bool is_gated(const Eigen::Ref<const ArrayXd>& p, double delta);

}  // namespace difflab
