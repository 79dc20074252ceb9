#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace difflab {

using Eigen::ArrayXd;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(sum(exp(x))), max-shifted. Empty input and all -inf both give -inf.
template <typename Derived>
double log_sum_exp(const Eigen::ArrayBase<Derived>& x) {
  if (x.size() == 0) return kNegInf;
  const double m = x.maxCoeff();
  if (m == kNegInf) return kNegInf;
  return m + std::log((x - m).exp().sum());
}

template <typename Derived>
ArrayXd log_softmax(const Eigen::ArrayBase<Derived>& x) {
  return x - log_sum_exp(x);
}

template <typename Derived>
ArrayXd softmax(const Eigen::ArrayBase<Derived>& x) {
  ArrayXd z = (x - x.maxCoeff()).exp();
  return z / z.sum();
}

/// Shannon entropy in nats, 0 log 0 = 0.
template <typename Derived>
double entropy(const Eigen::ArrayBase<Derived>& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pi = p(i);
    if (pi > 0.0) h -= pi * std::log(pi);
  }
  return h;
}

/// Entropy of a distribution given in log domain: -sum exp(lp) * lp.
template <typename Derived>
double entropy_from_log(const Eigen::ArrayBase<Derived>& lp) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < lp.size(); ++i) {
    const double l = lp(i);
    if (l != kNegInf) h -= std::exp(l) * l;
  }
  return h;
}

/// Streaming log-sum-exp for enumeration loops that cannot hold all terms.
class LogSumExpAccumulator {
 public:
  void add(double x) {
    if (x == kNegInf) return;
    if (x <= max_) {
      sum_ += std::exp(x - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - x) + 1.0;
      max_ = x;
    }
  }
  double value() const { return max_ == kNegInf ? kNegInf : max_ + std::log(sum_); }

 private:
  double max_ = kNegInf;
  double sum_ = 0.0;
};

}  // namespace difflab
