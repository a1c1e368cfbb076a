#pragma once

// Knothe-Rosenblatt rearrangements: conditional CDF inversion on grids,
// recursive north-west-corner plans on atoms, and Gaussian closed forms.

#include <cstddef>
#include <vector>

#include "krot/cost.hpp"
#include "krot/measures.hpp"
#include "krot/ot_exact.hpp"

namespace krot {

/// Lower-triangular map tabulated on the source grid. Component i stores the
/// image T_i at every node of the sub-grid spanned by axes 0..i; evaluation
/// is multilinear in (x_0, ..., x_i) and clamps to the grid box.
class TriangularMap {
 public:
  TriangularMap() = default;
  TriangularMap(GridSpec grid, std::vector<std::vector<double>> tables);

  std::size_t dimension() const { return grid_.dimension(); }
  const GridSpec& grid() const { return grid_; }
  /// Row-major over axes 0..i (last axis fastest).
  const std::vector<double>& component(std::size_t i) const { return tables_[i]; }

  double evaluate_component(std::size_t i, std::span<const double> x) const;
  Vec evaluate(const Vec& x) const;
  /// Image of every grid node, one row per node in grid flat order.
  MapTable node_images() const;

  /// Every 1D section nondecreasing in its own coordinate.
  bool is_monotone() const;

 private:
  GridSpec grid_;
  std::vector<std::vector<double>> tables_;
};

struct AffineMap {
  Mat A;
  Vec b;

  Vec apply(const Vec& x) const { return A * x + b; }
  /// Images of the rows of `points`.
  MapTable apply_rows(const Mat& points) const;
};

/// T = G^{-1} o F at the nodes of f.
std::vector<double> monotone_rearrangement_1d(const GridDensity& f, const GridDensity& g);

TriangularMap kr_map_grid(const GridDensity& source, const GridDensity& target);

/// Recursive north-west-corner coupling on lexicographically sorted supports.
Coupling kr_plan_discrete(const DiscreteMeasure& source, const DiscreteMeasure& target);

/// T(x) = m1 + L1 L0^{-1} (x - m0).
AffineMap kr_map_gaussian(const GaussianMeasure& source, const GaussianMeasure& target);

/// Optimal map for the weighted cost, A^{-1} T~(A x) with A = rescale_matrix(cost).
AffineMap brenier_gaussian_weighted(const GaussianMeasure& source, const GaussianMeasure& target,
                                    const WeightedCost& cost);

/// Max relative violation of g(T_i | T_{<i}) dT_i/dx_i = f(x_i | x_{<i}) over
/// interior nodes whose source density exceeds `density_floor` times its maximum.
double kr_jacobian_identity_check(const TriangularMap& map, const GridDensity& source, const GridDensity& target,
                                  double density_floor = 1e-2);

}  // namespace krot
