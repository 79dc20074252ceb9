#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace difflab {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Token = std::int32_t;

/// Hard cap on |V|^L for exact tables and exhaustive enumeration.
inline constexpr std::int64_t kMaxTableStates = std::int64_t{1} << 24;

class Vocab {
 public:
  explicit Vocab(int size);
  int size() const { return size_; }
  bool operator==(const Vocab&) const = default;

 private:
  int size_;
};

/// |V|^length, rejecting anything past the enumeration guardrail.
std::int64_t checked_state_count(Vocab vocab, int length);

/// A fully committed token sequence. Flat indices are row major with
/// position 0 as the most significant digit.
class Sequence {
 public:
  Sequence() = default;
  explicit Sequence(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}
  static Sequence from_flat(std::int64_t flat, Vocab vocab, int length);

  std::int64_t flat_index(Vocab vocab) const;
  int length() const { return static_cast<int>(tokens_.size()); }
  const std::vector<Token>& tokens() const { return tokens_; }
  Token operator[](int i) const { return tokens_[static_cast<std::size_t>(i)]; }

  auto operator<=>(const Sequence&) const = default;

 private:
  std::vector<Token> tokens_;
};

/// Decoder state: the set of committed positions with their tokens.
class PartialState {
 public:
  PartialState(Vocab vocab, int length);

  Vocab vocab() const { return vocab_; }
  int length() const { return static_cast<int>(slots_.size()); }
  int committed_count() const { return committed_; }
  int remaining_count() const { return length() - committed_; }
  bool fully_committed() const { return committed_ == length(); }

  bool is_committed(int position) const;
  Token token_at(int position) const;

  /// Uncommitted positions in ascending order.
  std::vector<int> remaining() const;
  std::vector<int> committed_positions() const;

  Sequence to_sequence() const;

  bool operator==(const PartialState&) const = default;

 private:
  friend PartialState commit(const PartialState& s, int position, Token token);

  Vocab vocab_;
  std::vector<Token> slots_;  // -1 marks an uncommitted position
  int committed_ = 0;
};

/// Pure commit: returns a new state with (position, token) added.
PartialState commit(const PartialState& s, int position, Token token);

/// Predicts per-position marginals for uncommitted positions given a state.
///
/// logits(s, i) returns a log-score vector over the vocabulary, defined up to
/// an additive constant; softmax of it is the marginal q(x_i | s). Consumers
/// must be shift-invariant. Implementations are immutable after construction
/// and safe to share across threads.
class MarginalModel {
 public:
  virtual ~MarginalModel() = default;

  virtual Vocab vocab() const = 0;
  virtual int length() const = 0;
  virtual ArrayXd logits(const PartialState& s, int position) const = 0;

  /// softmax(logits): the marginal distribution of position i given s.
  ArrayXd marginal(const PartialState& s, int position) const;

  PartialState empty_state() const { return PartialState(vocab(), length()); }
};

/// Exact full-support joint over |V|^L sequences, stored in log domain.
class TabularJoint final : public MarginalModel {
 public:
  /// Builds from positive weights; normalizes in log domain.
  static TabularJoint from_probabilities(Vocab vocab, int length, const ArrayXd& weights);
  /// Builds from finite log weights; normalizes in log domain.
  static TabularJoint from_log_unnormalized(Vocab vocab, int length, ArrayXd log_weights);
  static TabularJoint from_json(const nlohmann::json& j);

  nlohmann::json to_json() const;

  Vocab vocab() const override { return vocab_; }
  int length() const override { return length_; }

  /// Log completion mass per candidate token at an uncommitted position;
  /// softmax of this is the exact conditional q(x_i | s).
  ArrayXd logits(const PartialState& s, int position) const override;

  const ArrayXd& log_table() const { return log_table_; }
  double log_prob(const Sequence& x) const;

  /// log of the total probability of all completions of s.
  double log_state_mass(const PartialState& s) const;

  /// Calls f(flat_index) for every full sequence consistent with s.
  template <typename F>
  void for_each_completion(const PartialState& s, F&& f) const;

 private:
  TabularJoint(Vocab vocab, int length, ArrayXd log_table);

  Vocab vocab_;
  int length_;
  ArrayXd log_table_;
  std::vector<std::int64_t> strides_;
};

/// q(x_i = v | x_A) by exact marginalization over the remaining positions.
ArrayXd exact_conditional(const TabularJoint& q, const PartialState& s, int position);

/// Joint of a first-order chain: q(x) = initial(x_0) * prod transition(x_{t-1}, x_t).
/// All entries must be strictly positive and rows must sum to one.
TabularJoint tabular_from_markov(const ArrayXd& initial, const MatrixXd& transition, int length);

/// Context-free per-position categoricals; the factorized suffix
/// approximation is exact for this model.
class ProductModel final : public MarginalModel {
 public:
  /// One positive weight vector per position; each is normalized.
  explicit ProductModel(std::vector<ArrayXd> position_weights);

  Vocab vocab() const override { return vocab_; }
  int length() const override { return static_cast<int>(log_probs_.size()); }
  ArrayXd logits(const PartialState& s, int position) const override;

  /// The position's categorical (probability domain).
  ArrayXd position_distribution(int position) const;

 private:
  Vocab vocab_;
  std::vector<ArrayXd> log_probs_;
};

/// Expands a product model into its exact joint table.
TabularJoint tabular_from_product(const ProductModel& model);

// ---- implementation of the enumeration template ----

template <typename F>
void TabularJoint::for_each_completion(const PartialState& s, F&& f) const {
  std::int64_t base = 0;
  for (int p = 0; p < length_; ++p)
    if (s.is_committed(p)) base += static_cast<std::int64_t>(s.token_at(p)) * strides_[p];

  const std::vector<int> rem = s.remaining();
  const int k = static_cast<int>(rem.size());
  if (k == 0) {
    f(base);
    return;
  }
  const int v = vocab_.size();
  std::vector<int> counter(rem.size(), 0);
  std::int64_t idx = base;
  for (;;) {
    f(idx);
    int d = k - 1;
    for (; d >= 0; --d) {
      ++counter[d];
      idx += strides_[rem[d]];
      if (counter[d] < v) break;
      idx -= static_cast<std::int64_t>(v) * strides_[rem[d]];
      counter[d] = 0;
    }
    if (d < 0) return;
  }
}

}  // namespace difflab
