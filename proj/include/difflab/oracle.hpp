#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <functional>
#include <vector>

#include "difflab/model.hpp"

namespace difflab {

/// Globally tempered joint p(x) proportional to q(x)^alpha, with its
/// log partition. The tempered table is itself a full-support joint.
struct TemperedJoint {
  TabularJoint base;
  double alpha;
  double log_partition;
  TabularJoint tempered;
};

TemperedJoint temper(const TabularJoint& q, double alpha);

/// alpha * E_{x~p}[log q(x)] + H(p), with the 0 log 0 = 0 convention.
/// p must be a normalized distribution over the model's sequence space.
double tempering_objective(const Eigen::Ref<const ArrayXd>& p, const TabularJoint& q,
                           double alpha);

/// log sum over suffix completions of q(x_suffix | s')^alpha after committing
/// (position, token); zero when nothing remains.
double exact_suffix_correction(const TabularJoint& q, const PartialState& s, int position,
                               Token token, double alpha);

/// The conditional of the tempered joint at an uncommitted position, computed
/// from local log-conditionals plus the exact suffix correction. alpha = 0
/// returns the uniform vector.
ArrayXd exact_corrected_conditional(const TabularJoint& q, const PartialState& s, int position,
                                    double alpha);

/// One enumerable decoding step: commit `token` at `position` with
/// probability `prob`; `gate_violated` marks gate-fallback branches.
struct CommitOutcome {
  int position;
  Token token;
  double prob;
  bool gate_violated = false;
};

/// Enumerates the stochastic commit choices a decoder makes in a state.
using StepKernel = std::function<std::vector<CommitOutcome>(const PartialState&)>;

/// Exact output distribution of a one-token-per-step decoder, obtained by
/// walking the full branch tree. Also carries the total probability of
/// gate-violating branches and the exact self-scored expected per-token NLL.
struct InducedDistribution {
  Vocab vocab;
  int length;
  ArrayXd probs;           // over |V|^L flat sequence indices
  double violation_mass;   // probability of branches with a gate violation
  double expected_nll;     // E[(1/L) sum_t -log p_model(token_t | s_t)]

  double entropy() const;
  double prob_of(const Sequence& x) const;

  /// Per-sequence probabilities plus summary fields; adds tv_to_target when a
  /// reference table is supplied.
  nlohmann::json to_json(const ArrayXd* target = nullptr) const;
};

/// Walks every branch of the decoder defined by `kernel` on `model`.
/// Per-step NLLs are scored against the model's own marginals.
InducedDistribution induced_distribution(const MarginalModel& model, const StepKernel& kernel);

double sequence_entropy(const InducedDistribution& d);
double sequence_entropy(const TemperedJoint& t);

/// Kernel: position uniform over remaining, token from the exact conditional.
/// At alpha = 1 the induced distribution is q itself.
StepKernel uniform_position_exact_kernel(const TabularJoint& q, double alpha = 1.0);

/// Kernel: commit positions in the fixed order given, token from the exact
/// corrected conditional of temper(q, alpha).
StepKernel fixed_order_corrected_kernel(const TabularJoint& q, std::vector<int> order,
                                        double alpha);

}  // namespace difflab
