#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "difflab/decoding.hpp"

namespace difflab {

/// Unbiased estimator 1 - C(n-c, k) / C(n, k), evaluated with the stable
/// product form; exactly 1 whenever n - c < k.
double pass_at_k(int n, int c, int k);

/// E[pass_at_k(n, c, k)] under c ~ Binomial(n, p), by exact summation.
/// Equals 1 - (1 - p)^k.
double pass_at_k_expectation(int n, double p, int k);

/// Worst-case 95% margin of error of the mean estimate over m_problems:
/// 1.96 * sqrt(max_p Var(pass_at_k) / M). The maximization scans p on a
/// 1e-4 grid and refines by golden section.
double worst_case_margin(int m_problems, int n, int k);

/// Total variation distance between two distributions on the same support.
double tv_distance(const Eigen::Ref<const ArrayXd>& p, const Eigen::Ref<const ArrayXd>& q);

struct ChiSquare {
  double statistic;
  int degrees_of_freedom;
};

/// Pearson statistic; bins with expected count below 5 are pooled into one.
ChiSquare chi_square(const std::vector<std::int64_t>& observed,
                     const Eigen::Ref<const ArrayXd>& expected_counts);

/// Per-sample, per-step negative log-likelihoods under a scoring model.
struct ScoredTrajectorySet {
  std::vector<std::vector<double>> step_nlls;

  static ScoredTrajectorySet from_trajectories(const std::vector<Trajectory>& trajectories);
};

/// exp of the mean per-token NLL over all samples and steps.
double genppl(const ScoredTrajectorySet& set);

struct ProblemCount {
  int problem_id;
  int n;
  int c;
};

/// Per-problem counts with the aggregated pass@k curve and worst-case margins.
struct PassAtKReport {
  std::vector<ProblemCount> problems;
  std::vector<int> k_grid;
  std::vector<double> aggregate;  // mean estimator value per k
  std::vector<double> margins;    // worst_case_margin(#problems, n, k) per k

  static PassAtKReport build(std::vector<ProblemCount> problems, std::vector<int> k_grid);

  double value_at(int k) const;
  nlohmann::json to_json() const;
  /// problem_id,n,c,k,pass_at_k
  std::string to_csv() const;
};

}  // namespace difflab
