#include "difflab/tempering.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "difflab/numerics.hpp"

namespace difflab {

void TemperingParams::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw std::invalid_argument("TemperingParams: alpha must be positive and finite");
  if (proposals < 0) throw std::invalid_argument("TemperingParams: proposals must be nonnegative");
  if (window.has_value() && *window < 1)
    throw std::invalid_argument("TemperingParams: window must be positive");
}

void ChainDiagnostics::absorb(const ChainDiagnostics& other) {
  proposals += other.proposals;
  acceptances += other.acceptances;
  candidates += other.candidates;
  correction_evals += other.correction_evals;
}

nlohmann::json ChainDiagnostics::to_json() const {
  nlohmann::json trace_json = nlohmann::json::array();
  for (const ChainStepRecord& r : trace)
    trace_json.push_back({{"token", r.token}, {"correction", r.correction}});
  return nlohmann::json{{"proposals", proposals},
                        {"acceptances", acceptances},
                        {"acceptance_rate", acceptance_rate()},
                        {"candidates", candidates},
                        {"correction_evals", correction_evals},
                        {"dedup_savings", dedup_savings()},
                        {"trace", std::move(trace_json)}};
}

ChainDiagnostics DecodeDiagnostics::totals() const {
  ChainDiagnostics t;
  for (const ChainDiagnostics& s : steps) t.absorb(s);
  return t;
}

nlohmann::json DecodeDiagnostics::to_json() const {
  const ChainDiagnostics t = totals();
  nlohmann::json per_step = nlohmann::json::array();
  for (const ChainDiagnostics& s : steps)
    per_step.push_back({{"proposals", s.proposals},
                        {"acceptances", s.acceptances},
                        {"correction_evals", s.correction_evals}});
  return nlohmann::json{{"schema_version", 1},
                        {"steps", std::move(per_step)},
                        {"proposals", t.proposals},
                        {"acceptances", t.acceptances},
                        {"acceptance_rate", t.acceptance_rate()},
                        {"candidates", t.candidates},
                        {"correction_evals", t.correction_evals},
                        {"dedup_savings", t.dedup_savings()}};
}

std::string DecodeDiagnostics::csv_row(std::int64_t sample_id) const {
  const ChainDiagnostics t = totals();
  std::ostringstream out;
  out << sample_id << ',' << steps.size() << ',' << t.proposals << ',' << t.acceptances << ','
      << t.acceptance_rate() << ',' << t.correction_evals << ',' << t.dedup_savings();
  return out.str();
}

namespace {

/// Remaining positions of s' ordered for the windowed correction: the
/// `window` nearest to `center` by index distance, emitted in ascending index.
std::vector<int> correction_positions(const PartialState& next, int center,
                                      std::optional<int> window) {
  std::vector<int> rem = next.remaining();
  if (!window.has_value() || static_cast<int>(rem.size()) <= *window) return rem;
  std::stable_sort(rem.begin(), rem.end(), [center](int a, int b) {
    const int da = std::abs(a - center), db = std::abs(b - center);
    return da != db ? da < db : a < b;
  });
  rem.resize(static_cast<std::size_t>(*window));
  std::sort(rem.begin(), rem.end());
  return rem;
}

}  // namespace

double mean_field_correction(const MarginalModel& model, const PartialState& s, int position,
                             Token token, double alpha, std::optional<int> window) {
  if (!(alpha > 0.0)) throw std::invalid_argument("mean_field_correction: alpha must be positive");
  const PartialState next = commit(s, position, token);
  double total = 0.0;
  for (int j : correction_positions(next, position, window)) {
    const ArrayXd log_marginal = log_softmax(model.logits(next, j));
    total += log_sum_exp(alpha * log_marginal);
  }
  return total;
}

ArrayXd approx_target(const MarginalModel& model, const PartialState& s, int position,
                      double alpha, std::optional<int> window) {
  if (!(alpha > 0.0)) throw std::invalid_argument("approx_target: alpha must be positive");
  const ArrayXd logits = model.logits(s, position);
  ArrayXd scores(model.vocab().size());
  for (Token v = 0; v < model.vocab().size(); ++v)
    scores(v) = alpha * logits(v) + mean_field_correction(model, s, position, v, alpha, window);
  return scores;
}

Token proposal_sample(const MarginalModel& model, const PartialState& s, int position,
                      double alpha, RngStream& rng) {
  if (!(alpha > 0.0)) throw std::invalid_argument("proposal_sample: alpha must be positive");
  return static_cast<Token>(rng.categorical(softmax(alpha * model.logits(s, position))));
}

double acceptance_prob(double correction_proposed, double correction_current) {
  return std::exp(std::min(0.0, correction_proposed - correction_current));
}

std::pair<Token, ChainDiagnostics> imh_sample_token(const MarginalModel& model,
                                                    const PartialState& s, int position,
                                                    const TemperingParams& params,
                                                    RngStream& rng) {
  params.validate();
  const ArrayXd proposal = softmax(params.alpha * model.logits(s, position));

  Token current = static_cast<Token>(rng.categorical(proposal));
  std::vector<Token> proposed(static_cast<std::size_t>(params.proposals));
  for (Token& y : proposed) y = static_cast<Token>(rng.categorical(proposal));

  ChainDiagnostics diag;
  diag.candidates = 1 + params.proposals;

  // Batched correction evaluation, deduplicated by token id.
  std::vector<double> correction(static_cast<std::size_t>(model.vocab().size()),
                                 std::numeric_limits<double>::quiet_NaN());
  auto ensure = [&](Token t) {
    double& c = correction[static_cast<std::size_t>(t)];
    if (std::isnan(c)) {
      c = mean_field_correction(model, s, position, t, params.alpha, params.window);
      ++diag.correction_evals;
    }
  };
  ensure(current);
  for (Token y : proposed) ensure(y);

  diag.trace.push_back({current, correction[static_cast<std::size_t>(current)]});
  for (Token y : proposed) {
    const double a = acceptance_prob(correction[static_cast<std::size_t>(y)],
                                     correction[static_cast<std::size_t>(current)]);
    ++diag.proposals;
    if (rng.uniform() < a) {
      current = y;
      ++diag.acceptances;
    }
    diag.trace.push_back({current, correction[static_cast<std::size_t>(current)]});
  }
  return {current, std::move(diag)};
}

ImhDecodeResult imh_decode(const MarginalModel& model, const TemperingParams& params,
                           PolicyKind position_policy, RngStream& rng) {
  params.validate();
  PartialState s = model.empty_state();
  Trajectory traj;
  DecodeDiagnostics diagnostics;

  if (position_policy == PolicyKind::kGated)
    throw std::invalid_argument("imh_decode: gated position policy is not supported");
  const DecodePolicy position_ranker{position_policy, SelectionMode::kRankThenSample, 1.0, 0.0};

  while (!s.fully_committed()) {
    const int position = select_position(position_ranker, model, s, rng);
    auto [token, diag] = imh_sample_token(model, s, position, params, rng);

    const ArrayXd proposal = softmax(params.alpha * model.logits(s, position));
    const DistributionStats stats = distribution_stats(proposal);
    traj.order.push_back(position);
    traj.tokens.push_back(token);
    traj.entropies.push_back(stats.entropy);
    traj.confidences.push_back(stats.confidence);
    traj.margins.push_back(stats.margin);
    traj.nlls.push_back(-std::log(model.marginal(s, position)(token)));
    traj.step_gate_violations.push_back(false);
    diagnostics.steps.push_back(std::move(diag));

    s = commit(s, position, token);
  }
  return ImhDecodeResult{s.to_sequence(), std::move(traj), std::move(diagnostics)};
}

}  // namespace difflab
