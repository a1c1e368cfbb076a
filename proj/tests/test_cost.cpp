#include <cmath>
#include <random>

#include "doctest.h"
#include "krot/cost.hpp"
#include "support.hpp"

using namespace krot;
using namespace krot::test;

TEST_CASE("cost_eval examples") {
  Vec x = Vec::Zero(2), y(2);
  y << 1, 1;
  CHECK(cost_eval(WeightedCost(0.5, 2), x, x) == 0.0);
  CHECK(cost_eval(WeightedCost(0.5, 2), x, y) == doctest::Approx(1.5));
  Vec z(3);
  z << 1, 2, 3;
  CHECK(cost_eval(WeightedCost(0.1, 3), Vec::Zero(3), z) == doctest::Approx(1.49).epsilon(1e-14));
  KROT_CHECK_THROWS_CONTAINING(cost_eval(WeightedCost(0.1, 3), x, y), "dimension mismatch");
}

TEST_CASE("cost_matrix") {
  auto c = cost_matrix(WeightedCost(0.3, 1), atoms_1d({0, 1}).points(), atoms_1d({2, 3}).points());
  Mat expected(2, 2);
  expected << 4, 9, 1, 4;
  CHECK((c - expected).cwiseAbs().maxCoeff() == 0.0);
  CHECK(cost_matrix(WeightedCost(1, 1), atoms_1d({5}).points(), atoms_1d({5}).points())(0, 0) == 0.0);

  std::mt19937_64 rng(11);
  auto a = random_measure(rng, 5, 3, false), b = random_measure(rng, 4, 3, false);
  WeightedCost w(0.2, 3);
  CHECK((cost_matrix(w, a.points(), b.points()) - cost_matrix(w, b.points(), a.points()).transpose()).norm() == 0.0);
}

TEST_CASE("rescale_matrix") {
  CHECK(rescale_matrix(WeightedCost(1, 3)).isIdentity());
  Mat a = rescale_matrix(WeightedCost(0.25, 2));
  CHECK(a(0, 0) == 1.0);
  CHECK(a(1, 1) == doctest::Approx(0.5));
  Vec d(2);
  d << 1, 1;
  CHECK((a * d).squaredNorm() == doctest::Approx(1.25));
  Mat b = rescale_matrix(WeightedCost(0.01, 3));
  CHECK(b(1, 1) == doctest::Approx(0.1));
  CHECK(b(2, 2) == doctest::Approx(0.01));
  CHECK(b(0, 1) == 0.0);
  KROT_CHECK_THROWS_CONTAINING(WeightedCost(0.0, 2), "epsilon must be positive");
}

TEST_CASE("cost invariants on random points") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(1e-6, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 1 + trial % 4;
    Vec x(d), y(d);
    for (int i = 0; i < d; ++i) x[i] = normal(rng), y[i] = normal(rng);
    const double eps = unit(rng);
    WeightedCost c(eps, d);
    const double direct = c(x, y);
    const double rescaled = (rescale_matrix(c) * (x - y)).squaredNorm();
    CHECK(std::abs(direct - rescaled) <= 1e-14 * std::max(1.0, direct));
    const double smaller = WeightedCost(eps / 2, d)(x, y);
    CHECK(smaller <= direct);
    const double limit = WeightedCost(1e-8, d)(x, y);
    CHECK(std::abs(limit - (x[0] - y[0]) * (x[0] - y[0])) <= 1e-6 * (x - y).squaredNorm());
  }
}
