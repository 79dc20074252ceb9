#pragma once

#include <json.hpp>

#include <vector>

#include "difflab/gating.hpp"
#include "difflab/model.hpp"
#include "difflab/oracle.hpp"
#include "difflab/rng.hpp"

namespace difflab {

enum class PolicyKind { kRandom, kConfidence, kEntropy, kMargin, kGated };

/// Sample-then-filter draws tokens for every remaining position first and
/// ranks positions by the sampled token's probability; rank-then-sample ranks
/// positions by a distribution statistic and samples only at the winner.
enum class SelectionMode { kRankThenSample, kSampleThenFilter };

struct DecodePolicy {
  PolicyKind kind = PolicyKind::kRandom;
  SelectionMode mode = SelectionMode::kRankThenSample;
  double tau = 1.0;        // local temperature for baseline commit sampling
  double gate_delta = 0.0; // kGated only

  static DecodePolicy random(double tau = 1.0);
  static DecodePolicy confidence(double tau = 1.0,
                                 SelectionMode mode = SelectionMode::kSampleThenFilter);
  static DecodePolicy entropy(double tau = 1.0);
  static DecodePolicy margin(double tau = 1.0);
  static DecodePolicy gated(double delta);
  /// Gated policies with the threshold translated from the entropy or margin
  /// commit criteria to an equivalent confidence bound.
  static DecodePolicy gated_from_entropy(double eps, Vocab vocab);
  static DecodePolicy gated_from_margin(double gamma, Vocab vocab);

  void validate(Vocab vocab) const;
};

/// Scalar statistics of a commit distribution.
struct DistributionStats {
  double confidence;  // top-1 probability
  double margin;      // top-1 minus top-2
  double entropy;     // nats
};

DistributionStats distribution_stats(const Eigen::Ref<const ArrayXd>& p);

/// Full record of one decode: commit order, committed tokens, per-step
/// commit-distribution statistics, self-scored NLLs and gate flags.
struct Trajectory {
  std::vector<int> order;
  std::vector<Token> tokens;  // in commit order
  std::vector<double> entropies;
  std::vector<double> confidences;
  std::vector<double> margins;
  std::vector<double> nlls;  // -log p_model(token | state), untempered
  std::vector<bool> step_gate_violations;

  bool gate_violated() const;
  Sequence sequence() const;
  nlohmann::json to_json() const;
};

struct DecodeResult {
  Sequence sequence;
  Trajectory trajectory;
};

/// Position choice for one step. Random draws uniformly from the remaining
/// set; the others rank the commit distributions and break ties toward the
/// lowest position index.
int select_position(const DecodePolicy& policy, const MarginalModel& model,
                    const PartialState& s, RngStream& rng);

/// Samples a token from softmax(logits / tau) at the given position.
Token commit_token(const DecodePolicy& policy, const MarginalModel& model,
                   const PartialState& s, int position, RngStream& rng);

/// Runs exactly L one-token steps.
DecodeResult decode(const DecodePolicy& policy, const MarginalModel& model, RngStream& rng);

/// Commits only at gate-passing positions (highest confidence among them);
/// when none qualifies, falls back to the max-confidence position and flags
/// the step. Tokens are sampled from the model's own marginal.
DecodeResult gated_decode(const MarginalModel& model, double delta, RngStream& rng);

/// Exact branch enumeration of the same step rules, for induced_distribution.
StepKernel policy_step_kernel(const DecodePolicy& policy, const MarginalModel& model);
StepKernel gated_step_kernel(const MarginalModel& model, double delta);

InducedDistribution induced_distribution(const DecodePolicy& policy, const MarginalModel& model);
InducedDistribution induced_gated_distribution(const MarginalModel& model, double delta);

}  // namespace difflab
