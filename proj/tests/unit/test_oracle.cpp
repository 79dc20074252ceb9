#include <doctest.h>

#include <cmath>
#include <vector>

#include "difflab/instances.hpp"
#include "difflab/numerics.hpp"
#include "difflab/oracle.hpp"
#include "difflab/rng.hpp"

using namespace difflab;

namespace {

TabularJoint two_token_joint(double p0, double p1) {
  ArrayXd w(2);
  w << p0, p1;
  return TabularJoint::from_probabilities(Vocab(2), 1, w);
}

}  // namespace

TEST_CASE("tempering identities at the trivial exponents") {
  RngStream rng(1);
  const TabularJoint q = random_joint(Vocab(3), 3, rng);

  const TemperedJoint t1 = temper(q, 1.0);
  CHECK((t1.tempered.log_table() - q.log_table()).abs().maxCoeff() < 1e-14);

  const TemperedJoint t0 = temper(q, 0.0);
  CHECK((t0.tempered.log_table().exp() - 1.0 / 27.0).abs().maxCoeff() < 1e-14);
  CHECK(t0.log_partition == doctest::Approx(std::log(27.0)).epsilon(1e-12));

  CHECK_THROWS_AS(temper(q, -0.5), std::invalid_argument);
}

TEST_CASE("tempering a two-token joint by hand") {
  const TabularJoint q = two_token_joint(0.2, 0.8);
  const TemperedJoint t = temper(q, 2.0);
  const ArrayXd p = t.tempered.log_table().exp();
  CHECK(p(0) == doctest::Approx(0.04 / 0.68).epsilon(1e-12));
  CHECK(p(1) == doctest::Approx(0.64 / 0.68).epsilon(1e-12));
  CHECK(t.log_partition == doctest::Approx(std::log(0.68)).epsilon(1e-12));
}

TEST_CASE("objective value on closed-form distributions") {
  RngStream rng(2);
  const TabularJoint q = random_joint(Vocab(3), 2, rng);

  const ArrayXd uniform = ArrayXd::Constant(9, 1.0 / 9.0);
  CHECK(tempering_objective(uniform, q, 0.0) == doctest::Approx(std::log(9.0)).epsilon(1e-12));

  // point mass: zero entropy, so J = alpha * log q at the point
  ArrayXd point = ArrayXd::Zero(9);
  Eigen::Index argmax;
  q.log_table().maxCoeff(&argmax);
  point(argmax) = 1.0;
  for (double alpha : {1.0, 25.0})
    CHECK(tempering_objective(point, q, alpha) ==
          doctest::Approx(alpha * q.log_table()(argmax)).epsilon(1e-12));

  ArrayXd unnormalized = uniform * 1.5;
  CHECK_THROWS_AS(tempering_objective(unnormalized, q, 1.0), std::invalid_argument);
}

TEST_CASE("objective at the tempered optimum equals the log partition") {
  RngStream rng(3);
  for (double alpha : {0.25, 1.0, 3.0}) {
    const TabularJoint q = random_joint(Vocab(4), 2, rng);
    const TemperedJoint t = temper(q, alpha);
    CHECK(std::abs(tempering_objective(t.tempered.log_table().exp(), q, alpha) - t.log_partition) <
          1e-10);
  }
}

TEST_CASE("tempered distribution maximizes the objective strictly") {
  RngStream rng(4);
  const TabularJoint q = random_joint(Vocab(3), 3, rng);
  const double alpha = 0.6;
  const TemperedJoint t = temper(q, alpha);
  const ArrayXd star = t.tempered.log_table().exp();
  const double j_star = tempering_objective(star, q, alpha);
  for (int rep = 0; rep < 1000; ++rep) {
    ArrayXd noise(star.size());
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise(i) = -std::log1p(-rng.uniform());
    noise /= noise.sum();
    const double beta = 0.001 + 0.6 * rng.uniform();
    const ArrayXd p = (1.0 - beta) * star + beta * noise;
    const double j = tempering_objective(p, q, alpha);
    CHECK(j_star >= j);
    if ((p - star).abs().maxCoeff() > 1e-9) CHECK(j_star > j);
  }
}

TEST_CASE("suffix correction conventions and factorization") {
  RngStream rng(5);

  // nothing remains after the commit
  const TabularJoint q1 = two_token_joint(0.3, 0.7);
  CHECK(exact_suffix_correction(q1, q1.empty_state(), 0, 0, 0.7) == 0.0);

  // product joints: the correction is a sum of per-position terms and does
  // not depend on the committed token
  const ProductModel pm = random_product(Vocab(3), 3, rng);
  const TabularJoint table = tabular_from_product(pm);
  const double alpha = 0.5;
  double expected = 0.0;
  for (int j : {1, 2}) expected += log_sum_exp(alpha * pm.position_distribution(j).log());
  for (Token v = 0; v < 3; ++v)
    CHECK(exact_suffix_correction(table, table.empty_state(), 0, v, alpha) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("suffix correction matches direct enumeration") {
  RngStream rng(6);
  const TabularJoint q = random_joint(Vocab(2), 3, rng);
  const double alpha = 0.5;
  const ArrayXd probs = q.log_table().exp();

  // commit (0, 0); enumerate the suffix conditional q(x1, x2 | x0 = 0)
  double state_mass = 0.0;
  for (std::int64_t idx = 0; idx < 4; ++idx) state_mass += probs(idx);
  double sum = 0.0;
  for (std::int64_t idx = 0; idx < 4; ++idx) sum += std::pow(probs(idx) / state_mass, alpha);
  CHECK(exact_suffix_correction(q, q.empty_state(), 0, 0, alpha) ==
        doctest::Approx(std::log(sum)).epsilon(1e-12));
}

TEST_CASE("corrected conditional: identity, factorization, uniform convention") {
  RngStream rng(7);
  const TabularJoint q = random_joint(Vocab(3), 3, rng);

  const ArrayXd at_one = exact_corrected_conditional(q, q.empty_state(), 1, 1.0);
  CHECK((at_one - exact_conditional(q, q.empty_state(), 1)).abs().maxCoeff() < 1e-12);

  const ProductModel pm = random_product(Vocab(3), 3, rng);
  const TabularJoint table = tabular_from_product(pm);
  for (double alpha : {0.5, 2.0}) {
    const ArrayXd got = exact_corrected_conditional(table, table.empty_state(), 0, alpha);
    const ArrayXd expected = softmax(alpha * pm.position_distribution(0).log());
    CHECK((got - expected).abs().maxCoeff() < 1e-12);
  }

  const ArrayXd at_zero = exact_corrected_conditional(q, q.empty_state(), 0, 0.0);
  CHECK((at_zero - 1.0 / 3.0).abs().maxCoeff() == 0.0);
}

TEST_CASE("corrected conditional agrees with marginalizing the tempered joint") {
  RngStream rng(8);
  const TabularJoint q = random_joint(Vocab(3), 3, rng);
  const double alpha = 2.0;
  const TemperedJoint t = temper(q, alpha);
  const PartialState s = commit(q.empty_state(), 2, 1);
  for (int i : {0, 1}) {
    const ArrayXd via_correction = exact_corrected_conditional(q, s, i, alpha);
    const ArrayXd via_temper = exact_conditional(t.tempered, s, i);
    CHECK((via_correction - via_temper).abs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("induced distribution of a deterministic greedy kernel is a point mass") {
  RngStream rng(9);
  const TabularJoint q = random_joint(Vocab(3), 3, rng);
  const StepKernel greedy = [&q](const PartialState& s) {
    const int i = s.remaining().front();
    const ArrayXd cond = exact_conditional(q, s, i);
    Eigen::Index best;
    cond.maxCoeff(&best);
    return std::vector<CommitOutcome>{{i, static_cast<Token>(best), 1.0, false}};
  };
  const InducedDistribution d = induced_distribution(q, greedy);
  CHECK(d.probs.maxCoeff() == 1.0);
  CHECK(d.entropy() == 0.0);
  CHECK(std::abs(d.probs.sum() - 1.0) < 1e-15);
}

TEST_CASE("random-order exact-conditional sampling induces the joint itself") {
  RngStream rng(10);
  const TabularJoint q = random_joint(Vocab(3), 3, rng);
  const InducedDistribution d = induced_distribution(q, uniform_position_exact_kernel(q));
  CHECK(0.5 * (d.probs - q.log_table().exp()).abs().sum() < 1e-10);
  CHECK(d.violation_mass == 0.0);
}

TEST_CASE("fixed-order corrected sampling induces the tempered joint, any order") {
  RngStream rng(11);
  const TabularJoint q = random_joint(Vocab(2), 3, rng);
  const double alpha = 0.7;
  const TemperedJoint t = temper(q, alpha);
  const ArrayXd target = t.tempered.log_table().exp();
  for (const std::vector<int>& order :
       {std::vector<int>{0, 1, 2}, std::vector<int>{2, 1, 0}, std::vector<int>{1, 2, 0}}) {
    const InducedDistribution d =
        induced_distribution(q, fixed_order_corrected_kernel(q, order, alpha));
    CHECK(0.5 * (d.probs - target).abs().sum() < 1e-10);
  }
}

TEST_CASE("sequence entropy closed forms") {
  RngStream rng(12);
  const TabularJoint q = random_joint(Vocab(3), 2, rng);
  const TemperedJoint t0 = temper(q, 0.0);
  CHECK(sequence_entropy(t0) == doctest::Approx(std::log(9.0)).epsilon(1e-12));

  const StepKernel greedy = [&q](const PartialState& s) {
    const int i = s.remaining().front();
    return std::vector<CommitOutcome>{{i, 0, 1.0, false}};
  };
  CHECK(sequence_entropy(induced_distribution(q, greedy)) == 0.0);
}

TEST_CASE("induced distribution json export") {
  RngStream rng(13);
  const TabularJoint q = random_joint(Vocab(2), 2, rng);
  const InducedDistribution d = induced_distribution(q, uniform_position_exact_kernel(q));
  const ArrayXd target = q.log_table().exp();
  const nlohmann::json j = d.to_json(&target);
  CHECK(j.at("probabilities").size() == 4);
  CHECK(j.at("tv_to_target").get<double>() < 1e-10);
  CHECK(j.at("entropy").get<double>() == doctest::Approx(d.entropy()));
  const nlohmann::json no_target = d.to_json();
  CHECK(no_target.at("tv_to_target").is_null());
}
