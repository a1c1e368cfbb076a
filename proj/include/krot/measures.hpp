#pragma once

// Probability measures on tensor-product grids and finite supports.
//
// GridDensity stores a density (mass per unit volume) tabulated at the nodes
// of a GridSpec; all integrals use the tensor trapezoid rule so that CDFs,
// marginals and atom weights are mutually consistent. DiscreteMeasure stores
// weighted atoms with pairwise distinct support points.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace krot {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Tensor-product grid: one strictly increasing node array per axis.
class GridSpec {
 public:
  GridSpec() = default;
  explicit GridSpec(std::vector<std::vector<double>> axes);

  /// Uniform grid with `nodes` points on [lo, hi] along every listed axis.
  static GridSpec uniform(std::span<const double> lo, std::span<const double> hi, std::size_t nodes);

  std::size_t dimension() const { return axes_.size(); }
  std::size_t size() const { return size_; }
  std::size_t count(std::size_t axis) const { return axes_[axis].size(); }
  const std::vector<double>& axis(std::size_t a) const { return axes_[a]; }
  const std::vector<std::vector<double>>& axes() const { return axes_; }

  /// Row-major flat index; the last axis varies fastest.
  std::size_t flat_index(std::span<const std::size_t> multi) const;
  std::vector<std::size_t> multi_index(std::size_t flat) const;
  Vec node(std::size_t flat) const;

  /// Trapezoid weight of node k along one axis.
  double axis_weight(std::size_t axis, std::size_t k) const;
  /// Product of per-axis trapezoid weights (the node's quadrature volume).
  double node_weight(std::size_t flat) const;

  bool operator==(const GridSpec& other) const { return axes_ == other.axes_; }

 private:
  std::vector<std::vector<double>> axes_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

/// Nonnegative density on a grid, normalized to unit trapezoid mass.
class GridDensity {
 public:
  GridDensity() = default;

  const GridSpec& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  double value(std::size_t flat) const { return values_[flat]; }
  std::size_t dimension() const { return grid_.dimension(); }

  /// Trapezoid integral of the stored values.
  double integral() const;
  /// Multilinear interpolation; points outside the bounding box evaluate to 0.
  double evaluate(std::span<const double> point) const;

  friend GridDensity build_grid_density(GridSpec grid, std::vector<double> raw);

 private:
  GridSpec grid_;
  std::vector<double> values_;
};

/// Weighted atoms. Rows of `points` are support points.
class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;
  /// Validates nonnegativity and distinct support, then rescales the weights
  /// to sum to one.
  DiscreteMeasure(Mat points, Vec weights);

  std::size_t size() const { return static_cast<std::size_t>(weights_.size()); }
  std::size_t dimension() const { return static_cast<std::size_t>(points_.cols()); }
  const Mat& points() const { return points_; }
  const Vec& weights() const { return weights_; }
  Vec point(std::size_t i) const { return points_.row(static_cast<Eigen::Index>(i)).transpose(); }
  double weight(std::size_t i) const { return weights_[static_cast<Eigen::Index>(i)]; }

  Vec mean() const;

 private:
  Mat points_;
  Vec weights_;
};

class GaussianMeasure {
 public:
  GaussianMeasure() = default;
  GaussianMeasure(Vec mean, Mat covariance);

  std::size_t dimension() const { return static_cast<std::size_t>(mean_.size()); }
  const Vec& mean() const { return mean_; }
  const Mat& covariance() const { return covariance_; }
  /// Lower-triangular Cholesky factor of the covariance.
  const Mat& cholesky() const { return chol_; }
  double pdf(const Vec& x) const;

 private:
  Vec mean_;
  Mat covariance_;
  Mat chol_;
  double log_norm_ = 0.0;
};

/// Tabulated CDF; values are nondecreasing with exact endpoints 0 and 1.
struct CdfTable {
  std::vector<double> abscissae;
  std::vector<double> values;

  /// Piecewise-linear evaluation, clamped outside the abscissae.
  double evaluate(double x) const;
};

GridDensity build_grid_density(GridSpec grid, std::vector<double> raw);

/// Integrates out every axis not listed in `kept_axes` (0-based, any order;
/// the result keeps them in ascending order).
GridDensity marginal(const GridDensity& density, std::span<const std::size_t> kept_axes);

/// Density of coordinate `axis` given the preceding coordinates. Trailing axes
/// are integrated out first; off-grid predecessor values use multilinear
/// interpolation of the joint.
GridDensity conditional_slice(const GridDensity& density, std::size_t axis,
                              std::span<const double> predecessors);

/// As conditional_slice, but a slice of (numerically) zero mass gives nullopt.
std::optional<GridDensity> try_conditional_slice(const GridDensity& density, std::size_t axis,
                                                 std::span<const double> predecessors);

CdfTable cdf_1d(const GridDensity& density);

/// Left-continuous generalized inverse: flat CDF segments map to their left end.
double quantile_1d(const CdfTable& cdf, double u);

double second_moment(const DiscreteMeasure& measure);
double second_moment(const GridDensity& density);

/// Evaluates the Gaussian at grid nodes and normalizes. Appends a note to
/// `warnings` (when given) for axes that do not cover mean +- 5 sd.
GridDensity discretize(const GaussianMeasure& gaussian, const GridSpec& grid,
                       std::vector<std::string>* warnings = nullptr);

/// Atom per node carrying the node's trapezoid mass.
DiscreteMeasure atomize(const GridDensity& density);

/// Gaussian-kernel smoothing of atoms onto a grid.
GridDensity mollify(const DiscreteMeasure& measure, double bandwidth, const GridSpec& grid);

}  // namespace krot
