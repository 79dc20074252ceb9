#include "difflab/decoding.hpp"

#include <cmath>
#include <stdexcept>

#include "difflab/numerics.hpp"

namespace difflab {

DecodePolicy DecodePolicy::random(double tau) {
  return DecodePolicy{PolicyKind::kRandom, SelectionMode::kRankThenSample, tau, 0.0};
}
DecodePolicy DecodePolicy::confidence(double tau, SelectionMode mode) {
  return DecodePolicy{PolicyKind::kConfidence, mode, tau, 0.0};
}
DecodePolicy DecodePolicy::entropy(double tau) {
  return DecodePolicy{PolicyKind::kEntropy, SelectionMode::kRankThenSample, tau, 0.0};
}
DecodePolicy DecodePolicy::margin(double tau) {
  return DecodePolicy{PolicyKind::kMargin, SelectionMode::kRankThenSample, tau, 0.0};
}
DecodePolicy DecodePolicy::gated(double delta) {
  return DecodePolicy{PolicyKind::kGated, SelectionMode::kRankThenSample, 1.0, delta};
}
DecodePolicy DecodePolicy::gated_from_entropy(double eps, Vocab vocab) {
  return gated(delta_from_entropy(eps, vocab));
}
DecodePolicy DecodePolicy::gated_from_margin(double gamma, Vocab vocab) {
  return gated(delta_from_margin(gamma, vocab));
}

void DecodePolicy::validate(Vocab vocab) const {
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw std::invalid_argument("DecodePolicy: tau must be positive and finite");
  if (kind == PolicyKind::kGated) GateSpec(gate_delta, vocab);
}

DistributionStats distribution_stats(const Eigen::Ref<const ArrayXd>& p) {
  double top1 = -1.0, top2 = -1.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double x = p(i);
    if (x > top1) {
      top2 = top1;
      top1 = x;
    } else if (x > top2) {
      top2 = x;
    }
  }
  return DistributionStats{top1, top1 - top2, entropy(p)};
}

bool Trajectory::gate_violated() const {
  for (bool v : step_gate_violations)
    if (v) return true;
  return false;
}

Sequence Trajectory::sequence() const {
  std::vector<Token> by_position(order.size(), Token{-1});
  for (std::size_t t = 0; t < order.size(); ++t)
    by_position[static_cast<std::size_t>(order[t])] = tokens[t];
  return Sequence(std::move(by_position));
}

nlohmann::json Trajectory::to_json() const {
  return nlohmann::json{{"schema_version", 1},
                        {"order", order},
                        {"tokens", tokens},
                        {"entropies", entropies},
                        {"confidences", confidences},
                        {"margins", margins},
                        {"nll", nlls},
                        {"gate_violated", gate_violated()}};
}

namespace {

ArrayXd commit_distribution(const MarginalModel& model, const PartialState& s, int position,
                            double tau) {
  return softmax(model.logits(s, position) / tau);
}

double rank_score(PolicyKind kind, const DistributionStats& stats) {
  switch (kind) {
    case PolicyKind::kConfidence:
      return stats.confidence;
    case PolicyKind::kEntropy:
      return -stats.entropy;
    case PolicyKind::kMargin:
      return stats.margin;
    default:
      throw std::invalid_argument("rank_score: policy has no ranking statistic");
  }
}

/// Deterministic winner among remaining positions; ties go to the lowest index.
int ranked_position(const DecodePolicy& policy, const MarginalModel& model,
                    const PartialState& s) {
  int best = -1;
  double best_score = kNegInf;
  for (int j : s.remaining()) {
    const DistributionStats stats = distribution_stats(commit_distribution(model, s, j, policy.tau));
    const double score = rank_score(policy.kind, stats);
    if (score > best_score) {
      best_score = score;
      best = j;
    }
  }
  return best;
}

struct GatedChoice {
  int position;
  bool violated;
};

GatedChoice gated_position(const MarginalModel& model, const PartialState& s, double delta) {
  int best_gated = -1, best_any = -1;
  double best_gated_conf = kNegInf, best_any_conf = kNegInf;
  for (int j : s.remaining()) {
    const double conf = model.marginal(s, j).maxCoeff();
    if (conf > best_any_conf) {
      best_any_conf = conf;
      best_any = j;
    }
    if (conf >= 1.0 - delta && conf > best_gated_conf) {
      best_gated_conf = conf;
      best_gated = j;
    }
  }
  if (best_gated >= 0) return {best_gated, false};
  return {best_any, true};
}

void record_step(Trajectory& traj, const MarginalModel& model, const PartialState& s,
                 int position, Token token, const ArrayXd& commit_dist, bool violated) {
  const DistributionStats stats = distribution_stats(commit_dist);
  traj.order.push_back(position);
  traj.tokens.push_back(token);
  traj.entropies.push_back(stats.entropy);
  traj.confidences.push_back(stats.confidence);
  traj.margins.push_back(stats.margin);
  traj.nlls.push_back(-std::log(model.marginal(s, position)(token)));
  traj.step_gate_violations.push_back(violated);
}

}  // namespace

int select_position(const DecodePolicy& policy, const MarginalModel& model,
                    const PartialState& s, RngStream& rng) {
  if (s.remaining_count() == 0)
    throw std::invalid_argument("select_position: no remaining positions");
  switch (policy.kind) {
    case PolicyKind::kRandom: {
      const std::vector<int> rem = s.remaining();
      return rem[rng.uniform_int(rem.size())];
    }
    case PolicyKind::kGated:
      return gated_position(model, s, policy.gate_delta).position;
    default:
      return ranked_position(policy, model, s);
  }
}

Token commit_token(const DecodePolicy& policy, const MarginalModel& model,
                   const PartialState& s, int position, RngStream& rng) {
  return static_cast<Token>(rng.categorical(commit_distribution(model, s, position, policy.tau)));
}

DecodeResult decode(const DecodePolicy& policy, const MarginalModel& model, RngStream& rng) {
  policy.validate(model.vocab());
  PartialState s = model.empty_state();
  Trajectory traj;
  const bool sample_then_filter =
      policy.mode == SelectionMode::kSampleThenFilter && policy.kind != PolicyKind::kRandom &&
      policy.kind != PolicyKind::kGated;

  while (!s.fully_committed()) {
    int position = -1;
    Token token = -1;
    bool violated = false;
    ArrayXd chosen_dist;

    if (sample_then_filter) {
      // Draw a candidate token at every remaining position, then keep the
      // position whose candidate scores best.
      double best_score = kNegInf;
      for (int j : s.remaining()) {
        ArrayXd p = commit_distribution(model, s, j, policy.tau);
        const Token t = static_cast<Token>(rng.categorical(p));
        const DistributionStats stats = distribution_stats(p);
        const double score =
            policy.kind == PolicyKind::kConfidence ? p(t) : rank_score(policy.kind, stats);
        if (score > best_score) {
          best_score = score;
          position = j;
          token = t;
          chosen_dist = std::move(p);
        }
      }
    } else if (policy.kind == PolicyKind::kGated) {
      const GatedChoice choice = gated_position(model, s, policy.gate_delta);
      position = choice.position;
      violated = choice.violated;
      chosen_dist = commit_distribution(model, s, position, policy.tau);
      token = static_cast<Token>(rng.categorical(chosen_dist));
    } else {
      position = select_position(policy, model, s, rng);
      chosen_dist = commit_distribution(model, s, position, policy.tau);
      token = static_cast<Token>(rng.categorical(chosen_dist));
    }

    record_step(traj, model, s, position, token, chosen_dist, violated);
    s = commit(s, position, token);
  }
  return DecodeResult{s.to_sequence(), std::move(traj)};
}

DecodeResult gated_decode(const MarginalModel& model, double delta, RngStream& rng) {
  return decode(DecodePolicy::gated(delta), model, rng);
}

StepKernel policy_step_kernel(const DecodePolicy& policy, const MarginalModel& model) {
  policy.validate(model.vocab());
  if (policy.kind == PolicyKind::kGated) return gated_step_kernel(model, policy.gate_delta);

  const bool joint_filter =
      policy.mode == SelectionMode::kSampleThenFilter && policy.kind == PolicyKind::kConfidence;

  return [policy, &model, joint_filter](const PartialState& s) {
    const std::vector<int> rem = s.remaining();
    const int v = model.vocab().size();
    std::vector<CommitOutcome> outcomes;

    if (policy.kind == PolicyKind::kRandom) {
      const double pos_prob = 1.0 / static_cast<double>(rem.size());
      for (int j : rem) {
        const ArrayXd p = commit_distribution(model, s, j, policy.tau);
        for (Token t = 0; t < v; ++t) outcomes.push_back({j, t, pos_prob * p(t), false});
      }
      return outcomes;
    }

    std::vector<ArrayXd> dists;
    dists.reserve(rem.size());
    for (int j : rem) dists.push_back(commit_distribution(model, s, j, policy.tau));

    if (!joint_filter) {
      int best = 0;
      double best_score = kNegInf;
      for (std::size_t k = 0; k < rem.size(); ++k) {
        const double score = rank_score(policy.kind, distribution_stats(dists[k]));
        if (score > best_score) {
          best_score = score;
          best = static_cast<int>(k);
        }
      }
      for (Token t = 0; t < v; ++t) outcomes.push_back({rem[static_cast<std::size_t>(best)], t, dists[static_cast<std::size_t>(best)](t), false});
      return outcomes;
    }

    // Sample-then-filter confidence: marginalize over the joint candidate
    // draw at all remaining positions.
    Eigen::ArrayXXd mass = Eigen::ArrayXXd::Zero(static_cast<Eigen::Index>(rem.size()), v);
    std::vector<int> draw(rem.size(), 0);
    for (;;) {
      double joint = 1.0;
      for (std::size_t k = 0; k < rem.size(); ++k) joint *= dists[k](draw[k]);
      int winner = 0;
      double winner_conf = -1.0;
      for (std::size_t k = 0; k < rem.size(); ++k) {
        const double conf = dists[k](draw[k]);
        if (conf > winner_conf) {
          winner_conf = conf;
          winner = static_cast<int>(k);
        }
      }
      mass(winner, draw[static_cast<std::size_t>(winner)]) += joint;
      int d = static_cast<int>(rem.size()) - 1;
      for (; d >= 0; --d) {
        if (++draw[static_cast<std::size_t>(d)] < v) break;
        draw[static_cast<std::size_t>(d)] = 0;
      }
      if (d < 0) break;
    }
    for (std::size_t k = 0; k < rem.size(); ++k)
      for (Token t = 0; t < v; ++t)
        if (mass(static_cast<Eigen::Index>(k), t) > 0.0)
          outcomes.push_back({rem[k], t, mass(static_cast<Eigen::Index>(k), t), false});
    return outcomes;
  };
}

StepKernel gated_step_kernel(const MarginalModel& model, double delta) {
  GateSpec(delta, model.vocab());
  return [&model, delta](const PartialState& s) {
    const GatedChoice choice = gated_position(model, s, delta);
    const ArrayXd p = model.marginal(s, choice.position);
    std::vector<CommitOutcome> outcomes;
    for (Token t = 0; t < model.vocab().size(); ++t)
      outcomes.push_back({choice.position, t, p(t), choice.violated});
    return outcomes;
  };
}

InducedDistribution induced_distribution(const DecodePolicy& policy, const MarginalModel& model) {
  return induced_distribution(model, policy_step_kernel(policy, model));
}

InducedDistribution induced_gated_distribution(const MarginalModel& model, double delta) {
  return induced_distribution(model, gated_step_kernel(model, delta));
}

}  // namespace difflab
