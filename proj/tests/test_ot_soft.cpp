#include <cmath>
#include <random>

#include "doctest.h"
#include "krot/cost.hpp"
#include "krot/error.hpp"
#include "krot/ot_soft.hpp"
#include "support.hpp"

using namespace krot;
using namespace krot::test;

namespace {

Mat sq_cost(const DiscreteMeasure& a, const DiscreteMeasure& b, double eps = 1.0) {
  return cost_matrix(WeightedCost(eps, a.dimension()), a.points(), b.points());
}

SoftSolution oracle(const DiscreteMeasure& a, const DiscreteMeasure& b, const Mat& c, double lambda) {
  OracleOptions o;
  o.lambda = lambda;
  return exact_soft_oracle(a, b, c, o);
}

}  // namespace

TEST_CASE("kl_divergence") {
  Vec q(2), r(2);
  q << 0.5, 0.5;
  r << 0.25, 0.75;
  CHECK(kl_divergence(q, q) == 0.0);
  CHECK(kl_divergence(q, r) == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)).epsilon(1e-14));
  CHECK(std::abs(kl_divergence(q, r) - 0.14384) < 1e-5);
  Vec one(2), other(2);
  one << 1, 0;
  other << 0, 1;
  CHECK(std::isinf(kl_divergence(one, other)));
  CHECK(kl_divergence(other, Vec::Constant(2, 0.5)) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("oracle on a single source atom agrees with a scalar bisection oracle") {
  for (double c2 : {0.3, 1.0, 4.0}) {
    for (double lambda : {0.1, 1.0, 10.0}) {
      auto mu = atoms_1d({0});
      auto nu = atoms_1d({0, 1});
      Mat c(1, 2);
      c << 0, c2;
      auto sol = oracle(mu, nu, c, lambda);
      // d/dq of lambda*KL((q, 1-q) || (1/2, 1/2)) + (1 - q) c2
      const double q = bisect([&](double x) { return lambda * std::log(x / (1 - x)) - c2; }, 1e-300, 1 - 1e-16);
      const Vec marg = sol.plan.col_sums();
      CHECK(marg[0] == doctest::Approx(q).epsilon(1e-9));
      const double obj = lambda * (q * std::log(2 * q) + (1 - q) * std::log(2 * (1 - q))) + (1 - q) * c2;
      CHECK(sol.objective == doctest::Approx(obj).epsilon(1e-9));
    }
  }
}

TEST_CASE("oracle limits") {
  auto mu = atoms_1d({0, 1}), nu = atoms_1d({2, 3});
  auto c = sq_cost(mu, nu);
  CHECK(std::abs(oracle(mu, nu, c, 1e9).objective - 4.0) <= 1e-3);

  std::mt19937_64 rng(8);
  auto a = random_measure(rng, 4, 2, false), b = random_measure(rng, 5, 2, false);
  auto sol = oracle(a, b, Mat::Zero(4, 5), 3.0);
  CHECK((sol.plan.col_sums() - b.weights()).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(std::abs(sol.objective) <= 1e-12);
}

TEST_CASE("oracle solutions satisfy the SoftSolution invariants") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 12; ++trial) {
    auto a = random_measure(rng, 2 + trial % 6, 1 + trial % 3, false);
    auto b = random_measure(rng, 3 + trial % 5, 1 + trial % 3, false, 1.0);
    auto c = sq_cost(a, b, trial % 2 ? 0.1 : 1.0);
    for (double lambda : {0.05, 1.0, 100.0}) {
      auto sol = oracle(a, b, c, lambda);
      CHECK((sol.plan.row_sums() - a.weights()).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK((sol.g.cwiseProduct(b.weights()) - sol.plan.col_sums()).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK(sol.residual <= 1e-8);
      CHECK(std::abs(sol.objective - (lambda * sol.kl + sol.transport)) <= 1e-9);
      CHECK(el_residual(sol, b, c) <= 1e-6);
      CHECK(resolve_consistency(sol, c) <= 1e-6);
      CHECK(sol.objective <= solve_exact(a, b, c).value + 1e-8);
      // the oracle beats the hard plan and the independent product plan
      CHECK(sol.objective <= soft_objective(solve_exact(a, b, c).plan, c, lambda) + 1e-10);
    }
  }
}

TEST_CASE("oracle KL is nonincreasing in lambda") {
  std::mt19937_64 rng(10);
  auto a = random_measure(rng, 7, 2, false), b = random_measure(rng, 6, 2, false, 0.8);
  auto c = sq_cost(a, b);
  double previous = INFINITY;
  for (double lambda : {0.01, 0.1, 1.0, 10.0, 100.0, 1e4}) {
    const double kl = oracle(a, b, c, lambda).kl;
    CHECK(kl <= previous + 1e-12);
    previous = kl;
  }
}

TEST_CASE("el_residual and resolve_consistency on hand-built solutions") {
  auto mu = atoms_1d({0, 1}), nu = atoms_1d({2, 3});
  auto c = sq_cost(mu, nu);
  auto sol = oracle(mu, nu, c, 1.0);
  CHECK(el_residual(sol, nu, c) <= 1e-6);

  // one supported entry per row: spread is zero by definition
  SoftSolution diag = sol;
  diag.plan = make_coupling(mu, nu, {{0, 0, 0.5}, {1, 1, 0.5}});
  diag.g = Vec::Ones(2);
  diag.log_g = Vec::Zero(2);
  CHECK(el_residual(diag, nu, c) == 0.0);

  // swapping mass between two columns makes the plan suboptimal for its own marginals
  SoftSolution swapped = diag;
  swapped.plan = make_coupling(mu, nu, {{0, 1, 0.5}, {1, 0, 0.5}});
  CHECK(resolve_consistency(swapped, c) > 0.5);

  SoftSolution broken = sol;
  broken.log_g[0] = -INFINITY;
  broken.g[0] = 0.0;
  KROT_CHECK_THROWS_CONTAINING(el_residual(broken, nu, c), "support inconsistency");
}

TEST_CASE("perturbed_target_formula") {
  auto mu = atoms_1d({0.5});
  auto nu = atoms_1d({0, 1, 2}, {0.2, 0.5, 0.3});
  auto c = sq_cost(mu, nu);
  auto sol = oracle(mu, nu, c, 0.7);
  auto check = perturbed_target_formula(sol, nu, c);
  // single source row: the formula is the perturbed target itself
  CHECK((check.predicted - sol.plan.col_sums()).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(check.max_disagreement == 0.0);

  auto big = oracle(atoms_1d({0, 1}), atoms_1d({2, 3}), sq_cost(atoms_1d({0, 1}), atoms_1d({2, 3})), 1e9);
  auto limit = perturbed_target_formula(big, atoms_1d({2, 3}), sq_cost(atoms_1d({0, 1}), atoms_1d({2, 3})));
  CHECK((limit.predicted - atoms_1d({2, 3}).weights()).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("semi_relaxed_sinkhorn") {
  auto mu = atoms_1d({0, 1}), nu = atoms_1d({2, 3});
  auto c = sq_cost(mu, nu);
  SinkhornOptions hard;
  hard.lambda = 1e9;
  hard.eta = 1e-3;
  // near-zero plan entries make the row violation decay like 1/k
  hard.tolerance = 1e-4;
  hard.max_iterations = 100000;
  auto h = semi_relaxed_sinkhorn(mu, nu, c, hard);
  CHECK(std::abs(h.transport - 4.0) <= 1e-2);
  CHECK((h.plan.row_sums() - mu.weights()).cwiseAbs().maxCoeff() <= 1e-12);

  // tiny lambda: target free, every row goes to its cheapest column
  SinkhornOptions free;
  free.lambda = 1e-9;
  free.eta = 1e-2;
  auto f = semi_relaxed_sinkhorn(mu, nu, c, free);
  CHECK(std::abs(f.transport - 2.5) <= 1e-6);

  // mu = nu: near-diagonal plan, cost vanishing with eta
  double previous = INFINITY;
  for (double eta : {1e-1, 1e-2, 1e-3}) {
    SinkhornOptions o;
    o.lambda = 1.0;
    o.eta = eta;
    o.max_iterations = 100000;
    auto s = semi_relaxed_sinkhorn(mu, mu, sq_cost(mu, mu), o);
    CHECK(s.transport < previous);
    previous = s.transport;
  }
  CHECK(previous < 1e-6);
}

TEST_CASE("semi_relaxed_sinkhorn agrees with the oracle when eta is annealed") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 6; ++trial) {
    auto a = random_measure(rng, 4 + 2 * trial, 1 + trial % 2, false);
    auto b = random_measure(rng, 3 + 2 * trial, 1 + trial % 2, false, 0.5);
    auto c = sq_cost(a, b);
    for (double lambda : {0.5, 5.0}) {
      SinkhornOptions o;
      o.lambda = lambda;
      o.eta = 1e-4;
      o.anneal = true;
      o.tolerance = 1e-6;
      o.max_iterations = 2000000;
      auto s = semi_relaxed_sinkhorn(a, b, c, o);
      const double exact = oracle(a, b, c, lambda).objective;
      CHECK(std::abs(s.objective - exact) <= 1e-3 * std::max(1.0, std::abs(exact)));
    }
  }
}

TEST_CASE("semi_relaxed_sinkhorn residual at moderate eta") {
  std::mt19937_64 rng(13);
  auto a = random_measure(rng, 6, 2, false), b = random_measure(rng, 5, 2, false);
  auto c = sq_cost(a, b);
  SinkhornOptions o;
  o.lambda = 1.0;
  o.eta = 1e-2;
  auto s = semi_relaxed_sinkhorn(a, b, c, o);
  CHECK(el_residual(s, b, c, 1e-3) <= 10 * o.eta);
}

TEST_CASE("semi_relaxed_sinkhorn errors") {
  auto mu = atoms_1d({0, 1}), nu = atoms_1d({2, 3});
  auto c = sq_cost(mu, nu);
  SinkhornOptions o;
  o.eta = 0.5;
  o.max_iterations = 2;
  o.tolerance = 1e-15;
  o.log_domain = LogDomain::kNever;
  try {
    semi_relaxed_sinkhorn(mu, nu, c, o);
    FAIL("expected a stall");
  } catch (const SolverError& e) {
    CHECK(std::string(e.what()).find("sinkhorn stalled") != std::string::npos);
    CHECK(e.last_violation() > 0);
  }

  SinkhornOptions under;
  under.eta = 1e-5;
  under.log_domain = LogDomain::kNever;
  auto far = atoms_1d({0, 1}), farther = atoms_1d({40, 41});
  KROT_CHECK_THROWS_CONTAINING(semi_relaxed_sinkhorn(far, farther, sq_cost(far, farther), under), "use log-domain");

  SinkhornOptions bad;
  bad.eta = 0.0;
  KROT_CHECK_THROWS_CONTAINING(semi_relaxed_sinkhorn(mu, nu, c, bad), "eta must be positive");
}
