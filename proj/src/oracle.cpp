#include "difflab/oracle.hpp"

#include <cmath>
#include <stdexcept>

#include "difflab/numerics.hpp"

namespace difflab {

TemperedJoint temper(const TabularJoint& q, double alpha) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("temper: alpha must be nonnegative");
  ArrayXd scaled = alpha * q.log_table();
  const double log_partition = log_sum_exp(scaled);
  TabularJoint tempered = TabularJoint::from_log_unnormalized(q.vocab(), q.length(), std::move(scaled));
  return TemperedJoint{q, alpha, log_partition, std::move(tempered)};
}

double tempering_objective(const Eigen::Ref<const ArrayXd>& p, const TabularJoint& q,
                           double alpha) {
  if (p.size() != q.log_table().size())
    throw std::invalid_argument("tempering_objective: distribution size mismatch");
  if ((p < 0.0).any()) throw std::invalid_argument("tempering_objective: negative probability");
  if (std::abs(p.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("tempering_objective: distribution must be normalized");
  double j = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pi = p(i);
    if (pi > 0.0) j += pi * (alpha * q.log_table()(i) - std::log(pi));
  }
  return j;
}

double exact_suffix_correction(const TabularJoint& q, const PartialState& s, int position,
                               Token token, double alpha) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("exact_suffix_correction: alpha must be nonnegative");
  const PartialState next = commit(s, position, token);
  if (next.fully_committed()) return 0.0;
  const double log_mass = q.log_state_mass(next);
  LogSumExpAccumulator acc;
  q.for_each_completion(next, [&](std::int64_t idx) {
    acc.add(alpha * (q.log_table()(idx) - log_mass));
  });
  return acc.value();
}

ArrayXd exact_corrected_conditional(const TabularJoint& q, const PartialState& s, int position,
                                    double alpha) {
  if (!(alpha >= 0.0))
    throw std::invalid_argument("exact_corrected_conditional: alpha must be nonnegative");
  const int v = q.vocab().size();
  if (alpha == 0.0) return ArrayXd::Constant(v, 1.0 / v);
  const ArrayXd log_cond = log_softmax(q.logits(s, position));
  ArrayXd scores(v);
  for (Token t = 0; t < v; ++t)
    scores(t) = alpha * log_cond(t) + exact_suffix_correction(q, s, position, t, alpha);
  return softmax(scores);
}

double InducedDistribution::entropy() const { return difflab::entropy(probs); }

double InducedDistribution::prob_of(const Sequence& x) const {
  return probs(x.flat_index(vocab));
}

nlohmann::json InducedDistribution::to_json(const ArrayXd* target) const {
  nlohmann::json entries = nlohmann::json::array();
  for (std::int64_t idx = 0; idx < probs.size(); ++idx) {
    if (probs(idx) <= 0.0) continue;
    entries.push_back({{"tokens", Sequence::from_flat(idx, vocab, length).tokens()},
                       {"prob", probs(idx)}});
  }
  nlohmann::json j{{"schema_version", 1},
                   {"vocab", vocab.size()},
                   {"length", length},
                   {"probabilities", std::move(entries)},
                   {"entropy", entropy()},
                   {"violation_mass", violation_mass},
                   {"expected_nll", expected_nll}};
  if (target != nullptr) {
    if (target->size() != probs.size())
      throw std::invalid_argument("InducedDistribution::to_json: target size mismatch");
    j["tv_to_target"] = 0.5 * (probs - *target).abs().sum();
  } else {
    j["tv_to_target"] = nullptr;
  }
  return j;
}

namespace {

struct BranchWalker {
  const MarginalModel& model;
  const StepKernel& kernel;
  InducedDistribution& out;

  void walk(const PartialState& s, double path_prob, double nll_sum, bool violated) {
    if (s.fully_committed()) {
      const std::int64_t idx = s.to_sequence().flat_index(model.vocab());
      out.probs(idx) += path_prob;
      out.expected_nll += path_prob * nll_sum / model.length();
      if (violated) out.violation_mass += path_prob;
      return;
    }
    for (const CommitOutcome& o : kernel(s)) {
      if (o.prob <= 0.0) continue;
      const ArrayXd scoring = model.marginal(s, o.position);
      const double nll = -std::log(scoring(o.token));
      walk(commit(s, o.position, o.token), path_prob * o.prob, nll_sum + nll,
           violated || o.gate_violated);
    }
  }
};

}  // namespace

InducedDistribution induced_distribution(const MarginalModel& model, const StepKernel& kernel) {
  const std::int64_t n = checked_state_count(model.vocab(), model.length());
  InducedDistribution out{model.vocab(), model.length(), ArrayXd::Zero(n), 0.0, 0.0};
  BranchWalker walker{model, kernel, out};
  walker.walk(model.empty_state(), 1.0, 0.0, false);
  return out;
}

double sequence_entropy(const InducedDistribution& d) { return d.entropy(); }

double sequence_entropy(const TemperedJoint& t) {
  return entropy_from_log(t.tempered.log_table());
}

StepKernel uniform_position_exact_kernel(const TabularJoint& q, double alpha) {
  return [&q, alpha](const PartialState& s) {
    std::vector<CommitOutcome> outcomes;
    const std::vector<int> rem = s.remaining();
    const double pos_prob = 1.0 / static_cast<double>(rem.size());
    for (int i : rem) {
      const ArrayXd cond = alpha == 1.0 ? exact_conditional(q, s, i)
                                        : exact_corrected_conditional(q, s, i, alpha);
      for (Token v = 0; v < q.vocab().size(); ++v)
        outcomes.push_back({i, v, pos_prob * cond(v), false});
    }
    return outcomes;
  };
}

StepKernel fixed_order_corrected_kernel(const TabularJoint& q, std::vector<int> order,
                                        double alpha) {
  if (static_cast<int>(order.size()) != q.length())
    throw std::invalid_argument("fixed_order_corrected_kernel: order must be a permutation of [L]");
  return [&q, order = std::move(order), alpha](const PartialState& s) {
    const int step = s.committed_count();
    const int i = order[static_cast<std::size_t>(step)];
    const ArrayXd cond = exact_corrected_conditional(q, s, i, alpha);
    std::vector<CommitOutcome> outcomes;
    for (Token v = 0; v < q.vocab().size(); ++v) outcomes.push_back({i, v, cond(v), false});
    return outcomes;
  };
}

}  // namespace difflab
