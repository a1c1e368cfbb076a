#include "krot/dynamic.hpp"

#include <algorithm>
#include <cmath>

#include "krot/error.hpp"

namespace krot {

namespace {

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw_invalid("time outside [0,1]");
}

Mat jacobian_defect_matrix(const Mat& M, double t) {
  const auto d = M.rows();
  const Mat I = Mat::Identity(d, d);
  const Mat B = t * M + (1.0 - t) * I;
  Eigen::FullPivLU<Mat> lu(B);
  const double scale = std::max(1.0, B.cwiseAbs().maxCoeff());
  if (!lu.isInvertible() || std::abs(lu.determinant()) < 1e-12 * std::pow(scale, static_cast<double>(d)))
    throw_domain("interpolant not invertible");
  return (M - I) * lu.inverse();
}

double upper_norm(const Mat& J) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < J.rows(); ++i)
    for (Eigen::Index j = i + 1; j < J.cols(); ++j) s += J(i, j) * J(i, j);
  return std::sqrt(s);
}

// Multilinear deposit of `values` (one column per field) at `points` onto the
// grid, divided by node volumes. Points outside the grid box are dropped.
Mat splat(const GridSpec& grid, const Mat& points, const Mat& values) {
  const std::size_t d = grid.dimension();
  Mat out = Mat::Zero(static_cast<Eigen::Index>(grid.size()), values.cols());
  std::vector<std::size_t> base(d), multi(d);
  std::vector<double> frac(d);
  for (Eigen::Index p = 0; p < points.rows(); ++p) {
    bool inside = true;
    for (std::size_t a = 0; a < d && inside; ++a) {
      const auto& nodes = grid.axis(a);
      const double x = points(p, static_cast<Eigen::Index>(a));
      if (x < nodes.front() || x > nodes.back()) {
        inside = false;
        break;
      }
      auto k = static_cast<std::size_t>(std::upper_bound(nodes.begin(), nodes.end(), x) - nodes.begin());
      k = std::min(k, nodes.size() - 1) - 1;
      base[a] = k;
      frac[a] = (x - nodes[k]) / (nodes[k + 1] - nodes[k]);
    }
    if (!inside) continue;
    for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
      double w = 1.0;
      for (std::size_t a = 0; a < d; ++a) {
        const bool hi = (corner >> a) & 1U;
        multi[a] = base[a] + (hi ? 1 : 0);
        w *= hi ? frac[a] : 1.0 - frac[a];
      }
      if (w == 0.0) continue;
      out.row(static_cast<Eigen::Index>(grid.flat_index(multi))) += w * values.row(p);
    }
  }
  for (std::size_t k = 0; k < grid.size(); ++k) out.row(static_cast<Eigen::Index>(k)) /= grid.node_weight(k);
  return out;
}

// Centered differences along one axis (one-sided at the ends).
Vec axis_derivative(const GridSpec& grid, const Vec& field, std::size_t axis) {
  Vec out(field.size());
  const auto& nodes = grid.axis(axis);
  for (std::size_t flat = 0; flat < grid.size(); ++flat) {
    auto multi = grid.multi_index(flat);
    const std::size_t k = multi[axis];
    const std::size_t lo = k == 0 ? 0 : k - 1;
    const std::size_t hi = k + 1 == nodes.size() ? k : k + 1;
    multi[axis] = lo;
    const double f_lo = field[static_cast<Eigen::Index>(grid.flat_index(multi))];
    multi[axis] = hi;
    const double f_hi = field[static_cast<Eigen::Index>(grid.flat_index(multi))];
    out[static_cast<Eigen::Index>(flat)] = (f_hi - f_lo) / (nodes[hi] - nodes[lo]);
  }
  return out;
}

}  // namespace

Mat ParticleEnsemble::positions_at(double t) const {
  check_time(t);
  return origins + t * velocities;
}

ParticleEnsemble displacement_interpolate(const MapTable& map, const DiscreteMeasure& source,
                                          const std::vector<double>& times) {
  if (map.rows() != static_cast<Eigen::Index>(source.size()) ||
      map.cols() != static_cast<Eigen::Index>(source.dimension()))
    throw_invalid("support mismatch");
  for (double t : times) check_time(t);
  ParticleEnsemble e;
  e.times = times;
  e.origins = source.points();
  e.velocities = map - source.points();
  e.weights = source.weights();
  e.positions.reserve(times.size());
  for (double t : times) e.positions.push_back((1.0 - t) * source.points() + t * map);
  return e;
}

Vec particle_velocity(const ParticleEnsemble& ensemble, std::size_t particle, double t) {
  check_time(t);
  if (particle >= ensemble.size()) throw_invalid("particle index out of range");
  return ensemble.velocities.row(static_cast<Eigen::Index>(particle)).transpose();
}

double action(const ParticleEnsemble& ensemble, const WeightedCost& cost) {
  if (cost.dimension() != ensemble.dimension()) throw_invalid("dimension mismatch");
  double s = 0.0;
  for (Eigen::Index i = 0; i < ensemble.velocities.rows(); ++i)
    s += ensemble.weights[i] * cost.norm_sq(ensemble.velocities.row(i).transpose());
  return s;
}

double xt_optimality_check(const DiscreteMeasure& source, const ParticleEnsemble& ensemble, double t,
                           const WeightedCost& cost) {
  if (ensemble.size() != source.size()) throw_invalid("support mismatch");
  const Coupling plan = map_plan(source, ensemble.positions_at(t));
  const Mat C = cost_matrix(cost, source.points(), plan.target.points());
  const double map_cost = plan_cost(plan, C);
  const double optimum = solve_transport(plan.row_sums(), plan.col_sums(), C).value;
  return std::max(0.0, map_cost - optimum);
}

double velocity_jacobian_defect(const AffineMap& map, double t) {
  check_time(t);
  if (map.A.rows() != map.A.cols()) throw_invalid("map matrix must be square");
  return upper_norm(jacobian_defect_matrix(map.A, t));
}

double velocity_jacobian_defect(const PointMap& map, const Mat& points, double t, double probe) {
  check_time(t);
  if (!(probe > 0.0)) throw_invalid("probe radius must be positive");
  const auto d = points.cols();
  double worst = 0.0;
  for (Eigen::Index p = 0; p < points.rows(); ++p) {
    const Vec x = points.row(p).transpose();
    Mat DT(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
      Vec lo = x, hi = x;
      lo[j] -= probe;
      hi[j] += probe;
      DT.col(j) = (map(hi) - map(lo)) / (2.0 * probe);
    }
    worst = std::max(worst, upper_norm(jacobian_defect_matrix(DT, t)));
  }
  return worst;
}

double continuity_residual(const ParticleEnsemble& ensemble, const GridSpec& grid, TimeWindow window) {
  const std::size_t d = grid.dimension();
  if (d != ensemble.dimension()) throw_invalid("dimension mismatch");
  if (d < 1 || d > 2) throw_invalid("continuity residual supports 1D and 2D only");
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < ensemble.times.size(); ++k)
    if (ensemble.times[k] >= window.begin && ensemble.times[k] <= window.end) idx.push_back(k);
  if (idx.size() < 3) throw_invalid("at least 3 time samples required in the window");

  const Mat mass = ensemble.weights;
  std::vector<Vec> rho(idx.size());
  for (std::size_t s = 0; s < idx.size(); ++s) rho[s] = splat(grid, ensemble.positions[idx[s]], mass).col(0);
  Mat momentum_values = ensemble.velocities;
  for (Eigen::Index i = 0; i < momentum_values.rows(); ++i) momentum_values.row(i) *= ensemble.weights[i];

  double total = 0.0;
  for (std::size_t s = 1; s + 1 < idx.size(); ++s) {
    const double dt = ensemble.times[idx[s + 1]] - ensemble.times[idx[s - 1]];
    if (!(dt > 0.0)) throw_invalid("time samples must be increasing");
    Vec r = (rho[s + 1] - rho[s - 1]) / dt;
    const Mat m = splat(grid, ensemble.positions[idx[s]], momentum_values);
    for (std::size_t a = 0; a < d; ++a) r += axis_derivative(grid, m.col(static_cast<Eigen::Index>(a)), a);
    double l1 = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) l1 += std::abs(r[static_cast<Eigen::Index>(k)]) * grid.node_weight(k);
    total += l1;
  }
  return total / static_cast<double>(idx.size() - 2);
}

}  // namespace krot
