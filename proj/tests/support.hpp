#pragma once

// Fixtures and brute-force oracles shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "krot/measures.hpp"

namespace krot::test {

inline GridSpec uniform_grid(std::vector<double> lo, std::vector<double> hi, std::size_t nodes) {
  return GridSpec::uniform(lo, hi, nodes);
}

inline GridSpec grid_1d(double lo, double hi, std::size_t nodes) { return uniform_grid({lo}, {hi}, nodes); }

inline GaussianMeasure gaussian_1d(double mean, double var) {
  return GaussianMeasure(Vec::Constant(1, mean), Mat::Constant(1, 1, var));
}

inline GaussianMeasure standard_2d() { return GaussianMeasure(Vec::Zero(2), Mat::Identity(2, 2)); }

inline GaussianMeasure correlated_2d() {
  Mat s(2, 2);
  s << 2, 1, 1, 2;
  return GaussianMeasure(Vec::Zero(2), s);
}

inline DiscreteMeasure atoms_1d(std::vector<double> xs, std::vector<double> ws = {}) {
  Mat p(static_cast<Eigen::Index>(xs.size()), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) p(static_cast<Eigen::Index>(i), 0) = xs[i];
  if (ws.empty()) ws.assign(xs.size(), 1.0);
  return DiscreteMeasure(p, Eigen::Map<Vec>(ws.data(), static_cast<Eigen::Index>(ws.size())));
}

inline DiscreteMeasure random_measure(std::mt19937_64& rng, std::size_t n, std::size_t d, bool uniform_weights,
                                      double shift = 0.0) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> weight(0.1, 1.0);
  Mat p(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = normal(rng) + shift;
  Vec w(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = uniform_weights ? 1.0 : weight(rng);
  return DiscreteMeasure(p, w);
}

/// Minimum of sum_i C(i, sigma(i)) / n over all permutations.
inline double permutation_minimum(const Mat& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  std::vector<std::size_t> sigma(n);
  std::iota(sigma.begin(), sigma.end(), 0);
  double best = INFINITY;
  do {
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(sigma[i]));
    best = std::min(best, v / static_cast<double>(n));
  } while (std::next_permutation(sigma.begin(), sigma.end()));
  return best;
}

/// Bisection on a strictly increasing scalar function.
inline double bisect(const std::function<double(double)>& f, double lo, double hi, int steps = 200) {
  for (int k = 0; k < steps; ++k) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

template <typename F>
std::string error_message(F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

#define KROT_CHECK_THROWS_CONTAINING(expr, text) \
  CHECK(::krot::test::error_message([&] { (void)(expr); }).find(text) != std::string::npos)

}  // namespace krot::test
