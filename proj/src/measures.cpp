#include "krot/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "krot/error.hpp"

namespace krot {

namespace {

constexpr double kNullSetMass = 1e-13;

// Locates x in a strictly increasing axis: returns (left index, fraction).
// Requires axis.front() <= x <= axis.back().
std::pair<std::size_t, double> locate(const std::vector<double>& axis, double x) {
  if (x <= axis.front()) return {0, 0.0};
  if (x >= axis.back()) return {axis.size() - 2, 1.0};
  auto it = std::upper_bound(axis.begin(), axis.end(), x);
  std::size_t k = static_cast<std::size_t>(it - axis.begin()) - 1;
  return {k, (x - axis[k]) / (axis[k + 1] - axis[k])};
}

}  // namespace

// ---------------------------------------------------------------- GridSpec

GridSpec::GridSpec(std::vector<std::vector<double>> axes) : axes_(std::move(axes)) {
  if (axes_.empty()) throw_invalid("grid needs at least one axis");
  strides_.assign(axes_.size(), 1);
  size_ = 1;
  for (std::size_t a = axes_.size(); a-- > 0;) {
    const auto& ax = axes_[a];
    if (ax.size() < 2) throw_invalid("grid axis " + std::to_string(a) + " needs at least 2 nodes");
    for (std::size_t k = 0; k + 1 < ax.size(); ++k) {
      if (!(ax[k + 1] > ax[k]) || !std::isfinite(ax[k]) || !std::isfinite(ax[k + 1]))
        throw_invalid("grid axis " + std::to_string(a) + " is not strictly increasing");
    }
    strides_[a] = size_;
    size_ *= ax.size();
  }
}

GridSpec GridSpec::uniform(std::span<const double> lo, std::span<const double> hi, std::size_t nodes) {
  if (lo.size() != hi.size() || lo.empty()) throw_invalid("uniform grid bounds mismatch");
  if (nodes < 2) throw_invalid("uniform grid needs at least 2 nodes per axis");
  std::vector<std::vector<double>> axes(lo.size());
  for (std::size_t a = 0; a < lo.size(); ++a) {
    axes[a].resize(nodes);
    for (std::size_t k = 0; k < nodes; ++k)
      axes[a][k] = lo[a] + (hi[a] - lo[a]) * static_cast<double>(k) / static_cast<double>(nodes - 1);
    axes[a].back() = hi[a];
  }
  return GridSpec(std::move(axes));
}

std::size_t GridSpec::flat_index(std::span<const std::size_t> multi) const {
  std::size_t flat = 0;
  for (std::size_t a = 0; a < axes_.size(); ++a) flat += multi[a] * strides_[a];
  return flat;
}

std::vector<std::size_t> GridSpec::multi_index(std::size_t flat) const {
  std::vector<std::size_t> multi(axes_.size());
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    multi[a] = flat / strides_[a];
    flat %= strides_[a];
  }
  return multi;
}

Vec GridSpec::node(std::size_t flat) const {
  Vec x(static_cast<Eigen::Index>(axes_.size()));
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    x[static_cast<Eigen::Index>(a)] = axes_[a][flat / strides_[a]];
    flat %= strides_[a];
  }
  return x;
}

double GridSpec::axis_weight(std::size_t axis, std::size_t k) const {
  const auto& ax = axes_[axis];
  double left = k > 0 ? ax[k] - ax[k - 1] : 0.0;
  double right = k + 1 < ax.size() ? ax[k + 1] - ax[k] : 0.0;
  return 0.5 * (left + right);
}

double GridSpec::node_weight(std::size_t flat) const {
  double w = 1.0;
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    w *= axis_weight(a, flat / strides_[a]);
    flat %= strides_[a];
  }
  return w;
}

// ------------------------------------------------------------- GridDensity

double GridDensity::integral() const {
  double s = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) s += values_[i] * grid_.node_weight(i);
  return s;
}

double GridDensity::evaluate(std::span<const double> point) const {
  const std::size_t d = grid_.dimension();
  if (point.size() != d) throw_invalid("dimension mismatch");
  std::vector<std::size_t> base(d);
  std::vector<double> frac(d);
  for (std::size_t a = 0; a < d; ++a) {
    const auto& ax = grid_.axis(a);
    if (point[a] < ax.front() || point[a] > ax.back()) return 0.0;
    std::tie(base[a], frac[a]) = locate(ax, point[a]);
  }
  double result = 0.0;
  std::vector<std::size_t> corner(d);
  for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
    double w = 1.0;
    for (std::size_t a = 0; a < d; ++a) {
      bool up = (mask >> a) & 1U;
      corner[a] = base[a] + (up ? 1 : 0);
      w *= up ? frac[a] : 1.0 - frac[a];
    }
    if (w != 0.0) result += w * values_[grid_.flat_index(corner)];
  }
  return std::max(result, 0.0);
}

GridDensity build_grid_density(GridSpec grid, std::vector<double> raw) {
  if (raw.size() != grid.size()) throw_invalid("density values do not match grid size");
  bool any_positive = false;
  for (double v : raw) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw_domain("negative density");
    any_positive = any_positive || v > 0.0;
  }
  if (!any_positive) throw_domain("degenerate density");
  GridDensity out;
  out.grid_ = std::move(grid);
  out.values_ = std::move(raw);
  const double mass = out.integral();
  if (!(mass > 0.0)) throw_domain("degenerate density");
  for (double& v : out.values_) v /= mass;
  return out;
}

// --------------------------------------------------------- DiscreteMeasure

DiscreteMeasure::DiscreteMeasure(Mat points, Vec weights) : points_(std::move(points)), weights_(std::move(weights)) {
  if (points_.rows() != weights_.size()) throw_invalid("support and weight counts differ");
  if (points_.rows() == 0 || points_.cols() == 0) throw_invalid("empty measure");
  double total = 0.0;
  for (Eigen::Index i = 0; i < weights_.size(); ++i) {
    if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i])) throw_domain("negative weight");
    total += weights_[i];
  }
  if (!(total > 0.0)) throw_domain("measure has zero mass");
  weights_ /= total;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(points_.rows()));
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < points_.cols(); ++c) {
      if (points_(a, c) != points_(b, c)) return points_(a, c) < points_(b, c);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), less);
  for (std::size_t k = 1; k < order.size(); ++k) {
    if (!less(order[k - 1], order[k])) throw_invalid("support points are not pairwise distinct");
  }
}

Vec DiscreteMeasure::mean() const { return points_.transpose() * weights_; }

// --------------------------------------------------------- GaussianMeasure

GaussianMeasure::GaussianMeasure(Vec mean, Mat covariance) : mean_(std::move(mean)), covariance_(std::move(covariance)) {
  const auto d = mean_.size();
  if (d == 0 || covariance_.rows() != d || covariance_.cols() != d) throw_invalid("gaussian shape mismatch");
  const double scale = std::max(1.0, covariance_.cwiseAbs().maxCoeff());
  if ((covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw_domain("covariance not positive definite");
  Eigen::SelfAdjointEigenSolver<Mat> eig(covariance_);
  if (eig.eigenvalues().minCoeff() <= 0.0) throw_domain("covariance not positive definite");
  Eigen::LLT<Mat> llt(covariance_);
  if (llt.info() != Eigen::Success) throw_domain("covariance not positive definite");
  chol_ = llt.matrixL();
  double log_det = 2.0 * chol_.diagonal().array().log().sum();
  log_norm_ = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det);
}

double GaussianMeasure::pdf(const Vec& x) const {
  Vec z = chol_.triangularView<Eigen::Lower>().solve(x - mean_);
  return std::exp(log_norm_ - 0.5 * z.squaredNorm());
}

// ---------------------------------------------------------------- CdfTable

double CdfTable::evaluate(double x) const {
  if (x <= abscissae.front()) return values.front();
  if (x >= abscissae.back()) return values.back();
  auto [k, t] = locate(abscissae, x);
  return values[k] + t * (values[k + 1] - values[k]);
}

// -------------------------------------------------------------- operations

GridDensity marginal(const GridDensity& density, std::span<const std::size_t> kept_axes) {
  if (kept_axes.empty()) throw_invalid("no axes kept");
  const GridSpec& grid = density.grid();
  const std::size_t d = grid.dimension();
  std::vector<std::size_t> kept(kept_axes.begin(), kept_axes.end());
  std::sort(kept.begin(), kept.end());
  kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
  for (std::size_t a : kept)
    if (a >= d) throw_invalid("kept axis out of range");
  if (kept.size() == d) return density;

  std::vector<bool> is_kept(d, false);
  for (std::size_t a : kept) is_kept[a] = true;
  std::vector<std::vector<double>> axes;
  for (std::size_t a : kept) axes.push_back(grid.axis(a));
  GridSpec out_grid(axes);

  std::vector<double> acc(out_grid.size(), 0.0);
  std::vector<std::size_t> sub(kept.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    auto multi = grid.multi_index(i);
    double w = 1.0;
    std::size_t s = 0;
    for (std::size_t a = 0; a < d; ++a) {
      if (is_kept[a]) sub[s++] = multi[a];
      else w *= grid.axis_weight(a, multi[a]);
    }
    acc[out_grid.flat_index(sub)] += w * density.value(i);
  }
  return build_grid_density(std::move(out_grid), std::move(acc));
}

std::optional<GridDensity> try_conditional_slice(const GridDensity& density, std::size_t axis,
                                                 std::span<const double> predecessors) {
  const std::size_t d = density.dimension();
  if (axis >= d) throw_invalid("conditioning axis out of range");
  if (predecessors.size() != axis) throw_invalid("expected one predecessor value per preceding axis");

  GridDensity joint = density;
  if (axis + 1 < d) {
    std::vector<std::size_t> keep(axis + 1);
    std::iota(keep.begin(), keep.end(), 0);
    joint = marginal(density, keep);
  }
  const GridSpec& grid = joint.grid();
  for (std::size_t a = 0; a < axis; ++a) {
    const auto& ax = grid.axis(a);
    const double tol = 1e-12 * (ax.back() - ax.front());
    if (predecessors[a] < ax.front() - tol || predecessors[a] > ax.back() + tol)
      throw_domain("predecessor value outside grid bounding box");
  }

  std::vector<double> point(axis + 1);
  for (std::size_t a = 0; a < axis; ++a)
    point[a] = std::clamp(predecessors[a], grid.axis(a).front(), grid.axis(a).back());
  const auto& target_axis = grid.axis(axis);
  std::vector<double> slice(target_axis.size());
  for (std::size_t k = 0; k < target_axis.size(); ++k) {
    point[axis] = target_axis[k];
    slice[k] = joint.evaluate(point);
  }
  GridSpec line({target_axis});
  double mass = 0.0;
  for (std::size_t k = 0; k < slice.size(); ++k) mass += slice[k] * line.axis_weight(0, k);
  if (!(mass >= kNullSetMass)) return std::nullopt;
  return build_grid_density(std::move(line), std::move(slice));
}

GridDensity conditional_slice(const GridDensity& density, std::size_t axis, std::span<const double> predecessors) {
  auto slice = try_conditional_slice(density, axis, predecessors);
  if (!slice) throw_domain("conditioning on null set");
  return std::move(*slice);
}

CdfTable cdf_1d(const GridDensity& density) {
  if (density.dimension() != 1) throw_invalid("dimension mismatch");
  const auto& x = density.grid().axis(0);
  const auto& f = density.values();
  CdfTable cdf;
  cdf.abscissae = x;
  cdf.values.resize(x.size());
  cdf.values[0] = 0.0;
  for (std::size_t k = 1; k < x.size(); ++k)
    cdf.values[k] = cdf.values[k - 1] + 0.5 * (f[k - 1] + f[k]) * (x[k] - x[k - 1]);
  const double total = cdf.values.back();
  for (double& v : cdf.values) v /= total;
  cdf.values.back() = 1.0;
  return cdf;
}

double quantile_1d(const CdfTable& cdf, double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw_domain("quantile level out of range");
  const auto& F = cdf.values;
  const auto& x = cdf.abscissae;
  auto it = std::lower_bound(F.begin(), F.end(), u);
  if (it == F.begin()) return x.front();
  if (it == F.end()) return x.back();
  std::size_t k = static_cast<std::size_t>(it - F.begin());
  const double lo = F[k - 1], hi = F[k];
  return x[k - 1] + (u - lo) / (hi - lo) * (x[k] - x[k - 1]);
}

double second_moment(const DiscreteMeasure& measure) {
  return measure.weights().dot(measure.points().rowwise().squaredNorm());
}

double second_moment(const GridDensity& density) {
  const GridSpec& grid = density.grid();
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) s += grid.node(i).squaredNorm() * density.value(i) * grid.node_weight(i);
  return s;
}

GridDensity discretize(const GaussianMeasure& gaussian, const GridSpec& grid, std::vector<std::string>* warnings) {
  if (gaussian.dimension() != grid.dimension()) throw_invalid("dimension mismatch");
  if (warnings) {
    for (std::size_t a = 0; a < grid.dimension(); ++a) {
      const auto i = static_cast<Eigen::Index>(a);
      const double sd = std::sqrt(gaussian.covariance()(i, i));
      const double m = gaussian.mean()[i];
      if (grid.axis(a).front() > m - 5.0 * sd || grid.axis(a).back() < m + 5.0 * sd) {
        std::ostringstream msg;
        msg << "axis " << a << " does not cover mean +- 5 sd";
        warnings->push_back(msg.str());
      }
    }
  }
  std::vector<double> values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) values[i] = gaussian.pdf(grid.node(i));
  return build_grid_density(grid, std::move(values));
}

DiscreteMeasure atomize(const GridDensity& density) {
  const GridSpec& grid = density.grid();
  const auto n = static_cast<Eigen::Index>(grid.size());
  Mat points(n, static_cast<Eigen::Index>(grid.dimension()));
  Vec weights(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto flat = static_cast<std::size_t>(i);
    points.row(i) = grid.node(flat).transpose();
    weights[i] = density.value(flat) * grid.node_weight(flat);
  }
  return DiscreteMeasure(std::move(points), std::move(weights));
}

GridDensity mollify(const DiscreteMeasure& measure, double bandwidth, const GridSpec& grid) {
  if (!(bandwidth > 0.0)) throw_domain("invalid bandwidth");
  if (measure.dimension() != grid.dimension()) throw_invalid("dimension mismatch");
  const double inv_two_var = 0.5 / (bandwidth * bandwidth);
  std::vector<double> values(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec x = grid.node(i);
    double s = 0.0;
    for (std::size_t k = 0; k < measure.size(); ++k) {
      const auto row = static_cast<Eigen::Index>(k);
      s += measure.weights()[row] * std::exp(-(measure.points().row(row).transpose() - x).squaredNorm() * inv_two_var);
    }
    values[i] = s;
  }
  // Kernel normalization constants cancel in build_grid_density.
  return build_grid_density(grid, std::move(values));
}

}  // namespace krot
