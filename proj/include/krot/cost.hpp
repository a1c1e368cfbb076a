#pragma once

// Weighted quadratic cost sum_i eps^(i-1) (x_i - y_i)^2 and its diagonal
// rescaling to the plain squared Euclidean distance.

#include <cstddef>

#include "krot/measures.hpp"

namespace krot {

class WeightedCost {
 public:
  /// eps must lie in (0, 1].
  WeightedCost(double epsilon, std::size_t dimension);

  double epsilon() const { return epsilon_; }
  std::size_t dimension() const { return static_cast<std::size_t>(weights_.size()); }
  /// weights[i] = eps^i (0-based).
  const Vec& weights() const { return weights_; }

  double operator()(const Vec& x, const Vec& y) const;
  /// Squared weighted norm of a displacement.
  double norm_sq(const Vec& z) const;

 private:
  double epsilon_;
  Vec weights_;
};

inline double cost_eval(const WeightedCost& cost, const Vec& x, const Vec& y) { return cost(x, y); }

/// Entry (i, j) is cost(source row i, target row j).
Mat cost_matrix(const WeightedCost& cost, const Mat& source_support, const Mat& target_support);

/// diag(eps^((i-1)/2)), so that |A (x - y)|^2 equals the weighted cost.
Mat rescale_matrix(const WeightedCost& cost);

}  // namespace krot
