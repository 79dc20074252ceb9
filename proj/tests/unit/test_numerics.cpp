#include <doctest.h>

#include <cmath>

#include "difflab/numerics.hpp"

using namespace difflab;

TEST_CASE("log_sum_exp matches direct evaluation and survives shifts") {
  ArrayXd x(3);
  x << -1.0, 0.5, 2.0;
  const double direct = std::log(std::exp(-1.0) + std::exp(0.5) + std::exp(2.0));
  CHECK(log_sum_exp(x) == doctest::Approx(direct).epsilon(1e-14));
  CHECK(log_sum_exp(x + 700.0) == doctest::Approx(direct + 700.0).epsilon(1e-12));
  CHECK(log_sum_exp(x - 700.0) == doctest::Approx(direct - 700.0).epsilon(1e-12));
}

TEST_CASE("log_sum_exp of all -inf is -inf") {
  ArrayXd x = ArrayXd::Constant(4, kNegInf);
  CHECK(log_sum_exp(x) == kNegInf);
}

TEST_CASE("softmax normalizes and log_softmax agrees") {
  ArrayXd x(4);
  x << 0.3, -2.0, 5.0, 1.1;
  const ArrayXd p = softmax(x);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-14));
  const ArrayXd lp = log_softmax(x);
  for (int i = 0; i < 4; ++i) CHECK(std::exp(lp(i)) == doctest::Approx(p(i)).epsilon(1e-12));
}

TEST_CASE("entropy conventions") {
  ArrayXd point(3);
  point << 1.0, 0.0, 0.0;
  CHECK(entropy(point) == 0.0);
  ArrayXd uniform = ArrayXd::Constant(8, 1.0 / 8.0);
  CHECK(entropy(uniform) == doctest::Approx(std::log(8.0)).epsilon(1e-14));
  CHECK(entropy_from_log(uniform.log()) == doctest::Approx(std::log(8.0)).epsilon(1e-14));
}

TEST_CASE("streaming accumulator matches batch log_sum_exp") {
  ArrayXd x(6);
  x << -3.0, 4.2, 0.0, -700.0, 1.5, 4.2;
  LogSumExpAccumulator acc;
  for (int i = 0; i < x.size(); ++i) acc.add(x(i));
  CHECK(acc.value() == doctest::Approx(log_sum_exp(x)).epsilon(1e-14));
  LogSumExpAccumulator empty;
  CHECK(empty.value() == kNegInf);
}
