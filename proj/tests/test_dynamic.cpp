#include <cmath>
#include <random>

#include "doctest.h"
#include "krot/cost.hpp"
#include "krot/dynamic.hpp"
#include "support.hpp"

using namespace krot;
using namespace krot::test;

TEST_CASE("displacement_interpolate straight-line law") {
  auto mu = atoms_1d({0, 1});
  MapTable t(2, 1);
  t << 2, 3;
  auto e = displacement_interpolate(t, mu, {0, 0.25, 1});
  CHECK(e.positions[1](0, 0) == 0.5);
  CHECK(e.positions[1](1, 0) == 1.5);
  CHECK(e.positions[0] == mu.points());
  CHECK(e.positions[2] == t);
  CHECK(e.weights.sum() == doctest::Approx(1.0));

  auto still = displacement_interpolate(mu.points(), mu, {0, 0.5, 1});
  CHECK(still.positions[1] == still.positions[2]);

  auto one = atoms_1d({0});
  MapTable shift(1, 1);
  shift << 1;
  auto s = displacement_interpolate(shift, one, {0.5});
  CHECK(s.positions[0](0, 0) == 0.5);
  CHECK(particle_velocity(s, 0, 0.5)[0] == 1.0);

  KROT_CHECK_THROWS_CONTAINING(displacement_interpolate(t, mu, {1.5}), "time outside [0,1]");
  KROT_CHECK_THROWS_CONTAINING(displacement_interpolate(Mat::Zero(3, 1), mu, {0.5}), "support mismatch");
}

TEST_CASE("particle_velocity is constant along trajectories") {
  auto mu = atoms_1d({1});
  MapTable doubled(1, 1);
  doubled << 2;
  auto e = displacement_interpolate(doubled, mu, {0, 0.3, 0.9});
  for (double t : {0.0, 0.3, 0.9}) CHECK(particle_velocity(e, 0, t)[0] == 1.0);
  CHECK(e.positions_at(0.3)(0, 0) == doctest::Approx(1.3));

  Mat m(2, 2);
  m << 2, 0.5, 0.1, 1.5;
  Mat xs(3, 2);
  xs << 1, 0, 0, 1, -1, 2;
  DiscreteMeasure atoms(xs, Vec::Ones(3));
  AffineMap affine{m, Vec::Zero(2)};
  auto ea = displacement_interpolate(affine.apply_rows(xs), atoms, {0.5});
  for (std::size_t i = 0; i < 3; ++i) {
    Vec expected = (m - Mat::Identity(2, 2)) * atoms.point(i);
    CHECK((particle_velocity(ea, i, 0.5) - expected).norm() <= 1e-14);
  }
}

TEST_CASE("action equals the static transport cost") {
  auto mu = atoms_1d({0, 1}), nu = atoms_1d({2, 3});
  WeightedCost c(1.0, 1);
  auto sol = solve_exact(mu, nu, cost_matrix(c, mu.points(), nu.points()));
  auto e = displacement_interpolate(barycentric_map(sol.plan), mu, {0, 0.5, 1});
  CHECK(action(e, c) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(std::abs(action(e, c) - sol.value) <= 1e-12);

  auto single = atoms_1d({0});
  MapTable shift(1, 1);
  shift << 1;
  CHECK(action(displacement_interpolate(shift, single, {0.5}), c) == 1.0);
  CHECK(action(displacement_interpolate(mu.points(), mu, {0.5}), c) == 0.0);
}

TEST_CASE("xt_optimality_check") {
  auto mu = atoms_1d({0, 1});
  WeightedCost c(1.0, 1);
  MapTable mono(2, 1), anti(2, 1);
  mono << 2, 3.2;
  anti << 3.2, 2;
  auto em = displacement_interpolate(mono, mu, {0.5});
  CHECK(xt_optimality_check(mu, em, 0.5, c) <= 1e-10);
  auto ea = displacement_interpolate(anti, mu, {0.5});
  CHECK(xt_optimality_check(mu, ea, 0.5, c) > 0.1);
  auto ei = displacement_interpolate(mu.points(), mu, {0.5});
  CHECK(xt_optimality_check(mu, ei, 0.5, c) == 0.0);

  // weighted cost, random 2D instances: solver maps stay optimal at every t
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_measure(rng, 8, 2, true), b = random_measure(rng, 8, 2, true, 1.0);
    WeightedCost w(0.05, 2);
    auto sol = solve_exact(a, b, cost_matrix(w, a.points(), b.points()));
    auto e = displacement_interpolate(barycentric_map(sol.plan), a, {0.25, 0.5, 0.75});
    for (double t : {0.25, 0.5, 0.75}) CHECK(xt_optimality_check(a, e, t, w) <= 1e-8);
  }
}

TEST_CASE("restriction property of straight-line paths") {
  std::mt19937_64 rng(22);
  auto a = random_measure(rng, 6, 2, false);
  MapTable t = a.points() * 1.7;
  t.col(1).array() += 2.0;
  auto e = displacement_interpolate(t, a, {0.2, 0.6});
  const double s = 0.2, u = 0.6;
  Mat from_s = e.positions[0] + (u - s) / (1 - s) * (t - e.positions[0]);
  CHECK((from_s - e.positions[1]).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("velocity_jacobian_defect") {
  CHECK(velocity_jacobian_defect(AffineMap{Mat::Identity(2, 2), Vec::Zero(2)}, 0.5) == 0.0);
  Mat lower(3, 3);
  lower << 2, 0, 0, 0.5, 1.5, 0, -0.3, 0.2, 0.7;
  CHECK(velocity_jacobian_defect(AffineMap{lower, Vec::Zero(3)}, 0.5) == 0.0);

  Mat upper(2, 2);
  upper << 1, 1, 0, 1;
  // J = (M - I)(tM + (1 - t)I)^{-1} = [[0, 1], [0, 0]] [[1, -t], [0, 1]] = [[0, 1], [0, 0]]
  CHECK(velocity_jacobian_defect(AffineMap{upper, Vec::Zero(2)}, 0.3) == doctest::Approx(1.0));

  Mat flip(1, 1);
  flip << -1;
  KROT_CHECK_THROWS_CONTAINING(velocity_jacobian_defect(AffineMap{flip, Vec::Zero(1)}, 0.5), "interpolant not invertible");

  // finite-difference variant agrees with the exact affine formula
  Mat m(2, 2);
  m << 1.4, 0.3, 0.3, 1.2;
  AffineMap affine{m, Vec::Zero(2)};
  PointMap pm = [&](const Vec& x) { return affine.apply(x); };
  Mat pts(2, 2);
  pts << 0.1, 0.2, -0.5, 0.4;
  CHECK(velocity_jacobian_defect(pm, pts, 0.5, 0.1) == doctest::Approx(velocity_jacobian_defect(affine, 0.5)).epsilon(1e-8));
}

TEST_CASE("continuity_residual") {
  std::vector<double> xs, ws;
  for (int i = 0; i < 200; ++i) {
    xs.push_back(-4 + 8.0 * (i + 0.5) / 200);
    ws.push_back(std::exp(-xs.back() * xs.back() / 0.5));
  }
  auto blob = atoms_1d(xs, ws);
  auto grid = grid_1d(-5, 6, 41);
  auto still = displacement_interpolate(blob.points(), blob, {0.4, 0.5, 0.6});
  CHECK(continuity_residual(still, grid) <= 1e-12);

  // translation by one: residual shrinks under joint grid/time refinement
  double previous = INFINITY;
  for (int r : {1, 2, 4}) {
    std::vector<double> fx, fw;
    const int n = 400 * r;
    for (int i = 0; i < n; ++i) {
      fx.push_back(-4 + 8.0 * (i + 0.5) / n);
      fw.push_back(std::exp(-fx.back() * fx.back() / 0.5));
    }
    auto m = atoms_1d(fx, fw);
    MapTable t = (m.points().array() + 1.0).matrix();
    const double dt = 0.1 / r;
    auto e = displacement_interpolate(t, m, {0.5 - dt, 0.5, 0.5 + dt});
    const double res = continuity_residual(e, grid_1d(-5, 6, 20 * r + 1));
    CHECK(res * 1.5 <= previous);
    previous = res;
  }

  // rigid linear flow in 2D; particle density scales with the grid to keep splatting noise down
  previous = INFINITY;
  for (int r : {1, 2}) {
    auto g = discretize(standard_2d(), uniform_grid({-4, -4}, {4, 4}, 120 * r + 1));
    auto m = atomize(g);
    Mat a(2, 2);
    a << 1.2, 0, 0.3, 0.9;
    auto t = AffineMap{a, Vec::Zero(2)}.apply_rows(m.points());
    const double dt = 0.1 / r;
    auto e = displacement_interpolate(t, m, {0.5 - dt, 0.5, 0.5 + dt});
    const double res = continuity_residual(e, uniform_grid({-6, -6}, {6, 6}, 20 * r + 1));
    CHECK(res < previous);
    previous = res;
  }

  auto two = displacement_interpolate(blob.points(), blob, {0.4, 0.6});
  KROT_CHECK_THROWS_CONTAINING(continuity_residual(two, grid), "at least 3 time samples");
}
