#include "difflab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace difflab {

double pass_at_k(int n, int c, int k) {
  if (n < 1 || c < 0 || c > n) throw std::invalid_argument("pass_at_k: need 0 <= c <= n");
  if (k < 1 || k > n) throw std::invalid_argument("pass_at_k: need 1 <= k <= n");
  if (n - c < k) return 1.0;
  double miss = 1.0;
  for (int j = 0; j < k; ++j)
    miss *= static_cast<double>(n - c - j) / static_cast<double>(n - j);
  return 1.0 - miss;
}

namespace {

/// Binomial(n, p) pmf over all c, in long double to keep the exact-summation
/// identities tight at n = 256 and extreme p.
std::vector<long double> binomial_pmf(int n, double p) {
  std::vector<long double> pmf(static_cast<std::size_t>(n) + 1);
  if (p <= 0.0) {
    pmf[0] = 1.0L;
    return pmf;
  }
  if (p >= 1.0) {
    pmf[static_cast<std::size_t>(n)] = 1.0L;
    return pmf;
  }
  const long double lp = static_cast<long double>(p);
  long double coeff = 1.0L;  // C(n, c), exact-to-rounding row recurrence
  for (int c = 0; c <= n; ++c) {
    pmf[static_cast<std::size_t>(c)] =
        coeff * powl(lp, c) * powl(1.0L - lp, n - c);
    coeff = coeff * static_cast<long double>(n - c) / static_cast<long double>(c + 1);
  }
  return pmf;
}

long double estimator_variance(int n, double p, const std::vector<double>& values) {
  const std::vector<long double> pmf = binomial_pmf(n, p);
  long double mean = 0.0L, second = 0.0L;
  for (int c = 0; c <= n; ++c) {
    const long double v = static_cast<long double>(values[static_cast<std::size_t>(c)]);
    mean += pmf[static_cast<std::size_t>(c)] * v;
    second += pmf[static_cast<std::size_t>(c)] * v * v;
  }
  return second - mean * mean;
}

}  // namespace

double pass_at_k_expectation(int n, double p, int k) {
  if (!(p >= 0.0) || p > 1.0) throw std::invalid_argument("pass_at_k_expectation: p must lie in [0, 1]");
  if (k < 1 || k > n) throw std::invalid_argument("pass_at_k_expectation: need 1 <= k <= n");
  const std::vector<long double> pmf = binomial_pmf(n, p);
  long double acc = 0.0L;
  for (int c = 0; c <= n; ++c)
    acc += pmf[static_cast<std::size_t>(c)] * static_cast<long double>(pass_at_k(n, c, k));
  return static_cast<double>(acc);
}

namespace {

double max_estimator_variance(int n, int k) {
  std::vector<double> values(static_cast<std::size_t>(n) + 1);
  for (int c = 0; c <= n; ++c) values[static_cast<std::size_t>(c)] = pass_at_k(n, c, k);

  const double step = 1e-4;
  double best_p = 0.0;
  long double best_var = 0.0L;
  const int cells = static_cast<int>(std::lround(1.0 / step));
  for (int i = 0; i <= cells; ++i) {
    const double p = static_cast<double>(i) * step;
    const long double var = estimator_variance(n, p, values);
    if (var > best_var) {
      best_var = var;
      best_p = p;
    }
  }

  // Golden-section refinement around the grid winner.
  double lo = std::max(0.0, best_p - step);
  double hi = std::min(1.0, best_p + step);
  const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = hi - inv_phi * (hi - lo);
  double b = lo + inv_phi * (hi - lo);
  long double fa = estimator_variance(n, a, values);
  long double fb = estimator_variance(n, b, values);
  for (int iter = 0; iter < 80 && hi - lo > 1e-12; ++iter) {
    if (fa > fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - inv_phi * (hi - lo);
      fa = estimator_variance(n, a, values);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + inv_phi * (hi - lo);
      fb = estimator_variance(n, b, values);
    }
  }
  best_var = std::max(best_var, std::max(fa, fb));
  return static_cast<double>(best_var);
}

}  // namespace

double worst_case_margin(int m_problems, int n, int k) {
  if (m_problems < 1) throw std::invalid_argument("worst_case_margin: need at least one problem");
  if (k < 1 || k > n) throw std::invalid_argument("worst_case_margin: need 1 <= k <= n");

  static std::mutex cache_mutex;
  static std::map<std::pair<int, int>, double> cache;
  double max_var;
  {
    std::lock_guard<std::mutex> lock(cache_mutex);
    const auto it = cache.find({n, k});
    if (it != cache.end()) {
      max_var = it->second;
    } else {
      max_var = max_estimator_variance(n, k);
      cache.emplace(std::make_pair(n, k), max_var);
    }
  }
  return 1.96 * std::sqrt(max_var / m_problems);
}

double tv_distance(const Eigen::Ref<const ArrayXd>& p, const Eigen::Ref<const ArrayXd>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("tv_distance: support mismatch");
  return 0.5 * (p - q).abs().sum();
}

ChiSquare chi_square(const std::vector<std::int64_t>& observed,
                     const Eigen::Ref<const ArrayXd>& expected_counts) {
  if (static_cast<Eigen::Index>(observed.size()) != expected_counts.size())
    throw std::invalid_argument("chi_square: support mismatch");
  if (observed.empty()) throw std::invalid_argument("chi_square: empty input");

  double statistic = 0.0;
  int bins = 0;
  double pooled_obs = 0.0, pooled_exp = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double e = expected_counts(static_cast<Eigen::Index>(i));
    if (e < 0.0) throw std::invalid_argument("chi_square: negative expected count");
    if (e < 5.0) {
      pooled_obs += static_cast<double>(observed[i]);
      pooled_exp += e;
      continue;
    }
    const double d = static_cast<double>(observed[i]) - e;
    statistic += d * d / e;
    ++bins;
  }
  if (pooled_exp > 0.0) {
    const double d = pooled_obs - pooled_exp;
    statistic += d * d / pooled_exp;
    ++bins;
  }
  if (bins < 2) throw std::invalid_argument("chi_square: fewer than two usable bins");
  return ChiSquare{statistic, bins - 1};
}

ScoredTrajectorySet ScoredTrajectorySet::from_trajectories(
    const std::vector<Trajectory>& trajectories) {
  ScoredTrajectorySet set;
  set.step_nlls.reserve(trajectories.size());
  for (const Trajectory& t : trajectories) set.step_nlls.push_back(t.nlls);
  return set;
}

double genppl(const ScoredTrajectorySet& set) {
  if (set.step_nlls.empty()) throw std::invalid_argument("genppl: empty trajectory set");
  double total = 0.0;
  std::int64_t count = 0;
  for (const std::vector<double>& nlls : set.step_nlls) {
    if (nlls.empty()) throw std::invalid_argument("genppl: empty trajectory");
    for (double x : nlls) total += x;
    count += static_cast<std::int64_t>(nlls.size());
  }
  return std::exp(total / static_cast<double>(count));
}

PassAtKReport PassAtKReport::build(std::vector<ProblemCount> problems, std::vector<int> k_grid) {
  if (problems.empty()) throw std::invalid_argument("PassAtKReport: no problems");
  if (k_grid.empty()) throw std::invalid_argument("PassAtKReport: empty k grid");
  PassAtKReport report;
  report.problems = std::move(problems);
  report.k_grid = std::move(k_grid);
  for (int k : report.k_grid) {
    double mean = 0.0;
    for (const ProblemCount& pc : report.problems) mean += pass_at_k(pc.n, pc.c, k);
    report.aggregate.push_back(mean / static_cast<double>(report.problems.size()));
    report.margins.push_back(
        worst_case_margin(static_cast<int>(report.problems.size()), report.problems.front().n, k));
  }
  return report;
}

double PassAtKReport::value_at(int k) const {
  for (std::size_t i = 0; i < k_grid.size(); ++i)
    if (k_grid[i] == k) return aggregate[i];
  throw std::invalid_argument("PassAtKReport: k not in grid");
}

nlohmann::json PassAtKReport::to_json() const {
  nlohmann::json problems_json = nlohmann::json::array();
  for (const ProblemCount& pc : problems)
    problems_json.push_back({{"problem_id", pc.problem_id}, {"n", pc.n}, {"c", pc.c}});
  nlohmann::json curve = nlohmann::json::array();
  for (std::size_t i = 0; i < k_grid.size(); ++i)
    curve.push_back({{"k", k_grid[i]}, {"estimate", aggregate[i]}, {"margin", margins[i]}});
  return nlohmann::json{{"problems", std::move(problems_json)}, {"curve", std::move(curve)}};
}

std::string PassAtKReport::to_csv() const {
  std::ostringstream out;
  out << "problem_id,n,c,k,pass_at_k\n";
  for (const ProblemCount& pc : problems)
    for (int k : k_grid)
      out << pc.problem_id << ',' << pc.n << ',' << pc.c << ',' << k << ','
          << pass_at_k(pc.n, pc.c, k) << '\n';
  return out.str();
}

}  // namespace difflab
