#include "difflab/model.hpp"

#include <cmath>
#include <stdexcept>

#include "difflab/numerics.hpp"

namespace difflab {

namespace {

std::vector<std::int64_t> make_strides(int vocab, int length) {
  std::vector<std::int64_t> strides(static_cast<std::size_t>(length));
  std::int64_t s = 1;
  for (int p = length - 1; p >= 0; --p) {
    strides[static_cast<std::size_t>(p)] = s;
    s *= vocab;
  }
  return strides;
}

void check_position(int position, int length, const char* what) {
  if (position < 0 || position >= length)
    throw std::invalid_argument(std::string(what) + ": position out of range");
}

}  // namespace

Vocab::Vocab(int size) : size_(size) {
  if (size < 2) throw std::invalid_argument("Vocab: size must be at least 2");
}

std::int64_t checked_state_count(Vocab vocab, int length) {
  if (length < 1) throw std::invalid_argument("length must be at least 1");
  std::int64_t n = 1;
  for (int i = 0; i < length; ++i) {
    n *= vocab.size();
    if (n > kMaxTableStates)
      throw std::invalid_argument("state space exceeds the 2^24 enumeration guardrail");
  }
  return n;
}

Sequence Sequence::from_flat(std::int64_t flat, Vocab vocab, int length) {
  const std::int64_t total = checked_state_count(vocab, length);
  if (flat < 0 || flat >= total) throw std::invalid_argument("Sequence::from_flat: index out of range");
  std::vector<Token> tokens(static_cast<std::size_t>(length));
  for (int p = length - 1; p >= 0; --p) {
    tokens[static_cast<std::size_t>(p)] = static_cast<Token>(flat % vocab.size());
    flat /= vocab.size();
  }
  return Sequence(std::move(tokens));
}

std::int64_t Sequence::flat_index(Vocab vocab) const {
  std::int64_t idx = 0;
  for (Token t : tokens_) {
    if (t < 0 || t >= vocab.size()) throw std::invalid_argument("Sequence: token out of vocabulary");
    idx = idx * vocab.size() + t;
  }
  return idx;
}

PartialState::PartialState(Vocab vocab, int length) : vocab_(vocab) {
  if (length < 1) throw std::invalid_argument("PartialState: length must be at least 1");
  slots_.assign(static_cast<std::size_t>(length), Token{-1});
}

bool PartialState::is_committed(int position) const {
  check_position(position, length(), "PartialState::is_committed");
  return slots_[static_cast<std::size_t>(position)] >= 0;
}

Token PartialState::token_at(int position) const {
  check_position(position, length(), "PartialState::token_at");
  const Token t = slots_[static_cast<std::size_t>(position)];
  if (t < 0) throw std::invalid_argument("PartialState::token_at: position not committed");
  return t;
}

std::vector<int> PartialState::remaining() const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(remaining_count()));
  for (int p = 0; p < length(); ++p)
    if (slots_[static_cast<std::size_t>(p)] < 0) out.push_back(p);
  return out;
}

std::vector<int> PartialState::committed_positions() const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(committed_));
  for (int p = 0; p < length(); ++p)
    if (slots_[static_cast<std::size_t>(p)] >= 0) out.push_back(p);
  return out;
}

Sequence PartialState::to_sequence() const {
  if (!fully_committed())
    throw std::invalid_argument("PartialState::to_sequence: state not fully committed");
  return Sequence(slots_);
}

PartialState commit(const PartialState& s, int position, Token token) {
  check_position(position, s.length(), "commit");
  if (s.is_committed(position)) throw std::invalid_argument("commit: position already committed");
  if (token < 0 || token >= s.vocab().size())
    throw std::invalid_argument("commit: token out of vocabulary");
  PartialState out = s;
  out.slots_[static_cast<std::size_t>(position)] = token;
  ++out.committed_;
  return out;
}

ArrayXd MarginalModel::marginal(const PartialState& s, int position) const {
  return softmax(logits(s, position));
}

TabularJoint::TabularJoint(Vocab vocab, int length, ArrayXd log_table)
    : vocab_(vocab),
      length_(length),
      log_table_(std::move(log_table)),
      strides_(make_strides(vocab.size(), length)) {}

TabularJoint TabularJoint::from_probabilities(Vocab vocab, int length, const ArrayXd& weights) {
  const std::int64_t n = checked_state_count(vocab, length);
  if (weights.size() != n) throw std::invalid_argument("TabularJoint: table size mismatch");
  if (!(weights > 0.0).all())
    throw std::invalid_argument("TabularJoint: all entries must be strictly positive");
  return from_log_unnormalized(vocab, length, weights.log());
}

TabularJoint TabularJoint::from_log_unnormalized(Vocab vocab, int length, ArrayXd log_weights) {
  const std::int64_t n = checked_state_count(vocab, length);
  if (log_weights.size() != n) throw std::invalid_argument("TabularJoint: table size mismatch");
  if (!log_weights.isFinite().all())
    throw std::invalid_argument("TabularJoint: log weights must be finite (full support)");
  log_weights -= log_sum_exp(log_weights);
  return TabularJoint(vocab, length, std::move(log_weights));
}

TabularJoint TabularJoint::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("model json: expected an object");
  const bool markov = j.contains("initial") || j.contains("transition");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    static const char* table_keys[] = {"schema_version", "vocab", "length", "logprobs"};
    static const char* markov_keys[] = {"schema_version", "vocab", "length", "initial", "transition"};
    bool known = false;
    if (markov) {
      for (const char* k : markov_keys) known = known || key == k;
    } else {
      for (const char* k : table_keys) known = known || key == k;
    }
    if (!known) throw std::invalid_argument("model json: unknown key '" + key + "'");
  }
  const int length = j.at("length").get<int>();
  if (markov) {
    const auto initial_list = j.at("initial").get<std::vector<double>>();
    const int v = static_cast<int>(initial_list.size());
    if (j.contains("vocab") && j.at("vocab").get<int>() != v)
      throw std::invalid_argument("model json: vocab does not match initial size");
    ArrayXd initial = Eigen::Map<const ArrayXd>(initial_list.data(), v);
    const auto rows = j.at("transition").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(rows.size()) != v)
      throw std::invalid_argument("model json: transition must be vocab x vocab");
    MatrixXd transition(v, v);
    for (int r = 0; r < v; ++r) {
      if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != v)
        throw std::invalid_argument("model json: transition must be vocab x vocab");
      for (int c = 0; c < v; ++c) transition(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    return tabular_from_markov(initial, transition, length);
  }
  const Vocab vocab(j.at("vocab").get<int>());
  const auto logprobs = j.at("logprobs").get<std::vector<double>>();
  ArrayXd lw = Eigen::Map<const ArrayXd>(logprobs.data(), static_cast<Eigen::Index>(logprobs.size()));
  return from_log_unnormalized(vocab, length, std::move(lw));
}

nlohmann::json TabularJoint::to_json() const {
  std::vector<double> lp(log_table_.data(), log_table_.data() + log_table_.size());
  return nlohmann::json{{"schema_version", 1},
                        {"vocab", vocab_.size()},
                        {"length", length_},
                        {"logprobs", lp}};
}

ArrayXd TabularJoint::logits(const PartialState& s, int position) const {
  if (s.vocab() != vocab_ || s.length() != length_)
    throw std::invalid_argument("TabularJoint::logits: state does not match model dimensions");
  check_position(position, length_, "TabularJoint::logits");
  if (s.is_committed(position))
    throw std::invalid_argument("TabularJoint::logits: position already committed");
  // one enumeration pass over all completions, bucketed by the token at
  // `position`
  const std::int64_t stride = strides_[static_cast<std::size_t>(position)];
  const int v = vocab_.size();
  std::vector<LogSumExpAccumulator> acc(static_cast<std::size_t>(v));
  for_each_completion(s, [&](std::int64_t idx) {
    acc[static_cast<std::size_t>((idx / stride) % v)].add(log_table_(idx));
  });
  ArrayXd out(v);
  for (Token t = 0; t < v; ++t) out(t) = acc[static_cast<std::size_t>(t)].value();
  return out;
}

double TabularJoint::log_prob(const Sequence& x) const {
  if (x.length() != length_) throw std::invalid_argument("TabularJoint::log_prob: length mismatch");
  return log_table_(x.flat_index(vocab_));
}

double TabularJoint::log_state_mass(const PartialState& s) const {
  if (s.vocab() != vocab_ || s.length() != length_)
    throw std::invalid_argument("TabularJoint::log_state_mass: state does not match model");
  LogSumExpAccumulator acc;
  for_each_completion(s, [&](std::int64_t idx) { acc.add(log_table_(idx)); });
  return acc.value();
}

ArrayXd exact_conditional(const TabularJoint& q, const PartialState& s, int position) {
  return softmax(q.logits(s, position));
}

TabularJoint tabular_from_markov(const ArrayXd& initial, const MatrixXd& transition, int length) {
  const int v = static_cast<int>(initial.size());
  const Vocab vocab(v);
  if (transition.rows() != v || transition.cols() != v)
    throw std::invalid_argument("tabular_from_markov: transition must be vocab x vocab");
  if (!(initial > 0.0).all() || !(transition.array() > 0.0).all())
    throw std::invalid_argument("tabular_from_markov: all entries must be strictly positive");
  if (std::abs(initial.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("tabular_from_markov: initial must sum to 1");
  for (int r = 0; r < v; ++r)
    if (std::abs(transition.row(r).sum() - 1.0) > 1e-12)
      throw std::invalid_argument("tabular_from_markov: transition rows must sum to 1");

  const std::int64_t n = checked_state_count(vocab, length);
  const ArrayXd log_initial = initial.log();
  const Eigen::ArrayXXd log_transition = transition.array().log();
  ArrayXd lw(n);
  for (std::int64_t idx = 0; idx < n; ++idx) {
    const Sequence x = Sequence::from_flat(idx, vocab, length);
    double lp = log_initial(x[0]);
    for (int t = 1; t < length; ++t) lp += log_transition(x[t - 1], x[t]);
    lw(idx) = lp;
  }
  return TabularJoint::from_log_unnormalized(vocab, length, std::move(lw));
}

ProductModel::ProductModel(std::vector<ArrayXd> position_weights)
    : vocab_(position_weights.empty() || position_weights.front().size() < 2
                 ? throw std::invalid_argument("ProductModel: needs positions over a vocab of size >= 2")
                 : Vocab(static_cast<int>(position_weights.front().size()))) {
  log_probs_.reserve(position_weights.size());
  for (const ArrayXd& w : position_weights) {
    if (w.size() != vocab_.size())
      throw std::invalid_argument("ProductModel: inconsistent vocabulary sizes");
    if (!(w > 0.0).all())
      throw std::invalid_argument("ProductModel: all entries must be strictly positive");
    log_probs_.push_back(log_softmax(w.log()));
  }
}

ArrayXd ProductModel::logits(const PartialState& s, int position) const {
  if (s.vocab() != vocab_ || s.length() != length())
    throw std::invalid_argument("ProductModel::logits: state does not match model dimensions");
  check_position(position, length(), "ProductModel::logits");
  if (s.is_committed(position))
    throw std::invalid_argument("ProductModel::logits: position already committed");
  return log_probs_[static_cast<std::size_t>(position)];
}

ArrayXd ProductModel::position_distribution(int position) const {
  check_position(position, length(), "ProductModel::position_distribution");
  return log_probs_[static_cast<std::size_t>(position)].exp();
}

TabularJoint tabular_from_product(const ProductModel& model) {
  const Vocab vocab = model.vocab();
  const int length = model.length();
  const std::int64_t n = checked_state_count(vocab, length);
  std::vector<ArrayXd> logs;
  logs.reserve(static_cast<std::size_t>(length));
  const PartialState empty(vocab, length);
  for (int p = 0; p < length; ++p) logs.push_back(log_softmax(model.logits(empty, p)));
  ArrayXd lw(n);
  for (std::int64_t idx = 0; idx < n; ++idx) {
    const Sequence x = Sequence::from_flat(idx, vocab, length);
    double lp = 0.0;
    for (int p = 0; p < length; ++p) lp += logs[static_cast<std::size_t>(p)](x[p]);
    lw(idx) = lp;
  }
  return TabularJoint::from_log_unnormalized(vocab, length, std::move(lw));
}

}  // namespace difflab
