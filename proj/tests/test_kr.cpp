#include <cmath>

#include "doctest.h"
#include "krot/cost.hpp"
#include "krot/kr.hpp"
#include "support.hpp"

using namespace krot;
using namespace krot::test;

namespace {

// Grid pair for N(0, I2) -> N(0, [[2,1],[1,2]]), each covering +-5 sd per axis.
struct GaussianGrids {
  GridDensity source, target;
};

GaussianGrids gaussian_grids(std::size_t nodes) {
  const double s = 5 * std::sqrt(2.0);
  return {discretize(standard_2d(), uniform_grid({-5, -5}, {5, 5}, nodes)),
          discretize(correlated_2d(), uniform_grid({-s, -s}, {s, s}, nodes))};
}

}  // namespace

TEST_CASE("monotone_rearrangement_1d") {
  auto f = discretize(gaussian_1d(0, 1), grid_1d(-5, 5, 101));
  auto id = monotone_rearrangement_1d(f, f);
  for (std::size_t k = 0; k < id.size(); ++k) CHECK(id[k] == doctest::Approx(f.grid().node(k)[0]).epsilon(1e-12));

  auto u1 = build_grid_density(grid_1d(0, 1, 51), std::vector<double>(51, 1.0));
  auto u2 = build_grid_density(grid_1d(0, 2, 51), std::vector<double>(51, 1.0));
  auto t = monotone_rearrangement_1d(u1, u2);
  for (std::size_t k = 0; k < t.size(); ++k) CHECK(std::abs(t[k] - 2 * u1.grid().node(k)[0]) <= 0.04);

  auto g = discretize(gaussian_1d(3, 4), grid_1d(-7, 13, 401));
  auto n = discretize(gaussian_1d(0, 1), grid_1d(-5, 5, 201));
  auto tg = monotone_rearrangement_1d(n, g);
  for (std::size_t k = 0; k < tg.size(); ++k) {
    const double x = n.grid().node(k)[0];
    if (std::abs(x) <= 3) CHECK(std::abs(tg[k] - (3 + 2 * x)) <= 2e-2);
    if (k > 0) CHECK(tg[k] >= tg[k - 1]);
  }
}

TEST_CASE("kr_map_grid identity and product cases") {
  auto g = gaussian_grids(17);
  auto same = kr_map_grid(g.target, g.target);
  auto images = same.node_images();
  for (std::size_t k = 0; k < g.target.grid().size(); ++k) {
    auto x = g.target.grid().node(k);
    CHECK((images.row(static_cast<Eigen::Index>(k)).transpose() - x).cwiseAbs().maxCoeff() <= 1e-9);
  }

  // independent source and target: T_2 must not depend on x_1
  Mat cov(2, 2);
  cov << 1, 0, 0, 4;
  GaussianMeasure wide(Vec::Zero(2), cov);
  auto src = discretize(standard_2d(), uniform_grid({-5, -5}, {5, 5}, 21));
  auto tgt = discretize(wide, uniform_grid({-5, -10}, {5, 10}, 21));
  auto map = kr_map_grid(src, tgt);
  const auto& t2 = map.component(1);
  for (std::size_t i = 1; i < 21; ++i)
    for (std::size_t j = 0; j < 21; ++j) CHECK(t2[i * 21 + j] == doctest::Approx(t2[j]).epsilon(1e-9));
}

TEST_CASE("kr_map_grid on a source with an empty half") {
  // x1 > 0.5 carries no mass: those slices take the x2-marginal rearrangement
  auto grid = uniform_grid({0, 0}, {1, 1}, 11);
  std::vector<double> raw(grid.size(), 0.0), flat(grid.size(), 1.0);
  for (std::size_t k = 0; k < grid.size(); ++k)
    if (grid.multi_index(k)[0] <= 5) raw[k] = 1.0 + grid.node(k)[1];
  auto src = build_grid_density(grid, raw);
  auto map = kr_map_grid(src, build_grid_density(grid, flat));
  CHECK(map.is_monotone());
  const auto& t2 = map.component(1);
  const std::size_t only2[] = {1};
  const auto expected = monotone_rearrangement_1d(marginal(src, only2), marginal(build_grid_density(grid, flat), only2));
  for (std::size_t j = 0; j < 11; ++j) CHECK(t2[10 * 11 + j] == doctest::Approx(expected[j]).epsilon(1e-12));
}

TEST_CASE("kr_map_grid matches the Gaussian closed form") {
  auto g = gaussian_grids(64);
  auto map = kr_map_grid(g.source, g.target);
  CHECK(map.is_monotone());
  auto exact = kr_map_gaussian(standard_2d(), correlated_2d());
  auto images = map.node_images();
  double worst = 0;
  for (std::size_t k = 0; k < g.source.grid().size(); ++k) {
    auto x = g.source.grid().node(k);
    if (x.norm() > 2.5) continue;
    worst = std::max(worst, (images.row(static_cast<Eigen::Index>(k)).transpose() - exact.apply(x)).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 3e-2);
}

TEST_CASE("TriangularMap reads only leading coordinates") {
  auto g = gaussian_grids(21);
  auto map = kr_map_grid(g.source, g.target);
  Vec a(2), b(2);
  a << 0.3, -1.1;
  b << 0.3, 2.4;
  CHECK(map.evaluate(a)[0] == map.evaluate(b)[0]);
  CHECK(map.evaluate(a)[1] < map.evaluate(b)[1]);
}

TEST_CASE("kr_plan_discrete") {
  auto mu = atoms_1d({0, 1}), nu = atoms_1d({2, 3});
  auto p = kr_plan_discrete(mu, nu);
  REQUIRE(p.entries.size() == 2);
  CHECK(barycentric_map(p)(0, 0) == 2.0);
  CHECK(barycentric_map(p)(1, 0) == 3.0);

  auto same = kr_plan_discrete(mu, mu);
  for (const auto& e : same.entries) CHECK(e.row == e.col);

  Mat xs(4, 2), ys(4, 2);
  xs << 0, 0, 0, 1, 1, 0, 1, 1;
  ys << 3, 1, 2, 0, 3, 0, 2, 1;  // deliberately unsorted
  DiscreteMeasure a(xs, Vec::Ones(4)), b(ys, Vec::Ones(4));
  auto t = barycentric_map(kr_plan_discrete(a, b));
  for (int i = 0; i < 4; ++i) {
    CHECK(t(i, 0) == xs(i, 0) + 2);
    CHECK(t(i, 1) == xs(i, 1));
  }

  // atoms are split when masses do not line up
  auto split = kr_plan_discrete(atoms_1d({0}), atoms_1d({1, 2}, {1, 3}));
  CHECK(split.entries.size() == 2);
  CHECK(split.entries[1].mass == doctest::Approx(0.75));
}

TEST_CASE("kr_map_gaussian") {
  auto id = kr_map_gaussian(correlated_2d(), correlated_2d());
  CHECK(id.A.isIdentity(1e-14));
  CHECK(id.b.isZero());

  auto scalar = kr_map_gaussian(gaussian_1d(0, 1), gaussian_1d(3, 4));
  CHECK(scalar.A(0, 0) == doctest::Approx(2.0));
  CHECK(scalar.b[0] == doctest::Approx(3.0));

  auto m = kr_map_gaussian(standard_2d(), correlated_2d());
  CHECK(m.A(0, 1) == 0.0);
  CHECK(m.A(0, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(m.A(1, 0) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-14));
  CHECK(m.A(1, 1) == doctest::Approx(std::sqrt(1.5)).epsilon(1e-14));
  CHECK((m.A * m.A.transpose() - correlated_2d().covariance()).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("brenier_gaussian_weighted") {
  auto at_one = brenier_gaussian_weighted(standard_2d(), correlated_2d(), WeightedCost(1.0, 2));
  CHECK((at_one.A - at_one.A.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((at_one.A * at_one.A.transpose() - correlated_2d().covariance()).cwiseAbs().maxCoeff() <= 1e-10);

  auto same = brenier_gaussian_weighted(correlated_2d(), correlated_2d(), WeightedCost(0.01, 2));
  CHECK(same.A.isIdentity(1e-10));

  auto kr = kr_map_gaussian(standard_2d(), correlated_2d());
  double previous = INFINITY;
  for (double eps : {1.0, 0.1, 0.01, 1e-4}) {
    WeightedCost cost(eps, 2);
    auto m = brenier_gaussian_weighted(standard_2d(), correlated_2d(), cost);
    // pushes N(0, I) onto the target and is optimal for c_eps: A M A^{-1} symmetric PSD
    CHECK((m.A * m.A.transpose() - correlated_2d().covariance()).cwiseAbs().maxCoeff() <= 1e-9);
    Mat a = rescale_matrix(cost);
    Mat conj = a * m.A * a.inverse();
    CHECK((conj - conj.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * conj.norm());
    CHECK(std::abs(m.A(0, 1)) < previous);
    previous = std::abs(m.A(0, 1));
  }
  auto last = brenier_gaussian_weighted(standard_2d(), correlated_2d(), WeightedCost(1e-4, 2));
  CHECK((last.A - kr.A).cwiseAbs().maxCoeff() <= 5e-2);
  KROT_CHECK_THROWS_CONTAINING(WeightedCost(-1.0, 2), "epsilon must be positive");
}

TEST_CASE("kr_jacobian_identity_check") {
  auto f = discretize(gaussian_1d(0, 1), grid_1d(-5, 5, 101));
  CHECK(kr_jacobian_identity_check(kr_map_grid(f, f), f, f) <= 1e-10);

  auto u1 = build_grid_density(grid_1d(0, 1, 41), std::vector<double>(41, 1.0));
  auto u2 = build_grid_density(grid_1d(0, 2, 41), std::vector<double>(41, 1.0));
  CHECK(kr_jacobian_identity_check(kr_map_grid(u1, u2), u1, u2) <= 1e-10);

  auto coarse = gaussian_grids(32), fine = gaussian_grids(64);
  const double vc = kr_jacobian_identity_check(kr_map_grid(coarse.source, coarse.target), coarse.source, coarse.target);
  const double vf = kr_jacobian_identity_check(kr_map_grid(fine.source, fine.target), fine.source, fine.target);
  CHECK(vf <= 5e-2);
  CHECK(vf < vc);
}
