#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "difflab/decoding.hpp"
#include "difflab/model.hpp"
#include "difflab/rng.hpp"

namespace difflab {

struct TemperingParams {
  double alpha = 1.0;           // global exponent, must be positive
  int proposals = 0;            // chain length T, zero means pure proposal
  std::optional<int> window;    // suffix positions used by the correction; nullopt = all

  void validate() const;
};

struct ChainStepRecord {
  Token token;        // current chain state after the step
  double correction;  // its factorized suffix correction
};

/// Bookkeeping for one token-level chain (or an aggregate across steps).
struct ChainDiagnostics {
  std::int64_t proposals = 0;
  std::int64_t acceptances = 0;
  std::int64_t candidates = 0;        // correction evaluations requested (chain init + proposals)
  std::int64_t correction_evals = 0;  // after dedup by token id
  std::vector<ChainStepRecord> trace;

  double acceptance_rate() const { return proposals > 0 ? static_cast<double>(acceptances) / static_cast<double>(proposals) : 0.0; }
  double dedup_savings() const { return candidates > 0 ? 1.0 - static_cast<double>(correction_evals) / static_cast<double>(candidates) : 0.0; }
  void absorb(const ChainDiagnostics& other);  // counters only, trace dropped
  nlohmann::json to_json() const;
};

/// Per-decode diagnostics: one chain per committed token.
struct DecodeDiagnostics {
  std::vector<ChainDiagnostics> steps;

  ChainDiagnostics totals() const;
  nlohmann::json to_json() const;
  /// sample_id,steps,proposals,acceptances,acceptance_rate,correction_evals,dedup_savings
  std::string csv_row(std::int64_t sample_id) const;
};

/// Factorized suffix correction: after committing (position, token), the sum
/// over the remaining positions (nearest `window` of them, in index distance)
/// of log sum_u q(x_j = u | s')^alpha. Zero when nothing remains; zero for
/// every (position, token) at alpha = 1.
double mean_field_correction(const MarginalModel& model, const PartialState& s, int position,
                             Token token, double alpha,
                             std::optional<int> window = std::nullopt);

/// Unnormalized log scores of the corrected one-step target:
/// alpha * logits + correction, per candidate token.
ArrayXd approx_target(const MarginalModel& model, const PartialState& s, int position,
                      double alpha, std::optional<int> window = std::nullopt);

/// One draw from the independence proposal softmax(alpha * logits).
Token proposal_sample(const MarginalModel& model, const PartialState& s, int position,
                      double alpha, RngStream& rng);

/// min(1, exp(proposed - current)), clamped in log domain first.
double acceptance_prob(double correction_proposed, double correction_current);

/// Independence Metropolis-Hastings for one token: start from a proposal
/// draw, draw T further proposals, evaluate all corrections in one
/// deduplicated batch, then accept or reject sequentially.
std::pair<Token, ChainDiagnostics> imh_sample_token(const MarginalModel& model,
                                                    const PartialState& s, int position,
                                                    const TemperingParams& params,
                                                    RngStream& rng);

struct ImhDecodeResult {
  Sequence sequence;
  Trajectory trajectory;
  DecodeDiagnostics diagnostics;
};

/// Full decode with IMH token sampling. Position choice ranks the model's
/// untempered marginals (default: lowest entropy); kRandom draws uniformly.
ImhDecodeResult imh_decode(const MarginalModel& model, const TemperingParams& params,
                           PolicyKind position_policy, RngStream& rng);

inline ImhDecodeResult imh_decode(const MarginalModel& model, const TemperingParams& params,
                                  RngStream& rng) {
  return imh_decode(model, params, PolicyKind::kEntropy, rng);
}

}  // namespace difflab
