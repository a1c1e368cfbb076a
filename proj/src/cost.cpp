#include "krot/cost.hpp"

#include <cmath>

#include "krot/error.hpp"

namespace krot {

WeightedCost::WeightedCost(double epsilon, std::size_t dimension) : epsilon_(epsilon) {
  if (!(epsilon > 0.0)) throw_domain("epsilon must be positive");
  if (epsilon > 1.0) throw_domain("epsilon must not exceed 1");
  if (dimension == 0) throw_invalid("cost dimension must be positive");
  weights_.resize(static_cast<Eigen::Index>(dimension));
  weights_[0] = 1.0;
  for (Eigen::Index i = 1; i < weights_.size(); ++i) weights_[i] = weights_[i - 1] * epsilon;
}

double WeightedCost::operator()(const Vec& x, const Vec& y) const {
  if (x.size() != weights_.size() || y.size() != weights_.size()) throw_invalid("dimension mismatch");
  return weights_.dot((x - y).cwiseAbs2());
}

double WeightedCost::norm_sq(const Vec& z) const {
  if (z.size() != weights_.size()) throw_invalid("dimension mismatch");
  return weights_.dot(z.cwiseAbs2());
}

Mat cost_matrix(const WeightedCost& cost, const Mat& source_support, const Mat& target_support) {
  const auto d = static_cast<Eigen::Index>(cost.dimension());
  if (source_support.cols() != d || target_support.cols() != d) throw_invalid("dimension mismatch");
  if (source_support.rows() == 0 || target_support.rows() == 0) throw_invalid("empty support");
  Mat C(source_support.rows(), target_support.rows());
  const Vec& w = cost.weights();
  for (Eigen::Index j = 0; j < target_support.rows(); ++j) {
    for (Eigen::Index i = 0; i < source_support.rows(); ++i) {
      double s = 0.0;
      for (Eigen::Index c = 0; c < d; ++c) {
        const double diff = source_support(i, c) - target_support(j, c);
        s += w[c] * diff * diff;
      }
      C(i, j) = s;
    }
  }
  return C;
}

Mat rescale_matrix(const WeightedCost& cost) {
  return cost.weights().cwiseSqrt().asDiagonal();
}

}  // namespace krot
