#pragma once

// Displacement interpolation along straight particle paths and the dynamic
// diagnostics built on it.

#include <cstddef>
#include <functional>
#include <vector>

#include "krot/cost.hpp"
#include "krot/kr.hpp"
#include "krot/ot_exact.hpp"

namespace krot {

/// Particles X(t, x_i) = (1 - t) x_i + t T(x_i) sampled at fixed times.
struct ParticleEnsemble {
  std::vector<double> times;
  Mat origins;               // x_i, one row per particle
  Mat velocities;            // T(x_i) - x_i
  Vec weights;               // source weights, constant in time
  std::vector<Mat> positions;  // one matrix per time

  std::size_t size() const { return static_cast<std::size_t>(origins.rows()); }
  std::size_t dimension() const { return static_cast<std::size_t>(origins.cols()); }
  /// Positions at an arbitrary t in [0, 1].
  Mat positions_at(double t) const;
};

ParticleEnsemble displacement_interpolate(const MapTable& map, const DiscreteMeasure& source,
                                          const std::vector<double>& times);

/// T(x_i) - x_i; the same at every t.
Vec particle_velocity(const ParticleEnsemble& ensemble, std::size_t particle, double t);

/// sum_i w_i |T(x_i) - x_i|_eps^2.
double action(const ParticleEnsemble& ensemble, const WeightedCost& cost);

/// Cost of x -> X_t(x) minus the optimal cost between the source and the
/// time-t particle measure (coincident particles merged). Nonnegative.
double xt_optimality_check(const DiscreteMeasure& source, const ParticleEnsemble& ensemble, double t,
                           const WeightedCost& cost);

/// Frobenius norm of the strictly upper part of (M - I)(tM + (1 - t)I)^{-1}.
double velocity_jacobian_defect(const AffineMap& map, double t);

using PointMap = std::function<Vec(const Vec&)>;

/// Same quantity for a general map, with DT estimated by symmetric
/// differences of radius `probe` at each point; max over points.
double velocity_jacobian_defect(const PointMap& map, const Mat& points, double t, double probe);

/// Time window [t_begin, t_end] over the ensemble's sample times.
struct TimeWindow {
  double begin = 0.0;
  double end = 1.0;
};

/// Mean over interior samples of the L1 norm of d(rho)/dt + div(rho v), with
/// particles splatted (multi)linearly onto `grid`. 1D and 2D only.
double continuity_residual(const ParticleEnsemble& ensemble, const GridSpec& grid, TimeWindow window = {});

}  // namespace krot
