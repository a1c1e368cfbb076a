#include "krot/kr.hpp"

#include <algorithm>
#include <numeric>

#include "krot/error.hpp"

namespace krot {

namespace {

struct Cell {
  std::size_t index;
  double frac;
};

Cell locate(const std::vector<double>& nodes, double x) {
  if (x <= nodes.front()) return {0, 0.0};
  if (x >= nodes.back()) return {nodes.size() - 2, 1.0};
  const auto it = std::upper_bound(nodes.begin(), nodes.end(), x);
  const std::size_t k = static_cast<std::size_t>(it - nodes.begin()) - 1;
  return {k, (x - nodes[k]) / (nodes[k + 1] - nodes[k])};
}

// Flat index of multi[0..len) inside the sub-grid spanned by axes 0..len-1.
std::size_t sub_index(const GridSpec& grid, const std::vector<std::size_t>& multi, std::size_t len) {
  std::size_t idx = 0;
  for (std::size_t k = 0; k < len; ++k) idx = idx * grid.count(k) + multi[k];
  return idx;
}

std::size_t sub_size(const GridSpec& grid, std::size_t len) {
  std::size_t s = 1;
  for (std::size_t k = 0; k < len; ++k) s *= grid.count(k);
  return s;
}

std::vector<std::size_t> sub_multi(const GridSpec& grid, std::size_t flat, std::size_t len) {
  std::vector<std::size_t> multi(len);
  for (std::size_t k = len; k-- > 0;) {
    multi[k] = flat % grid.count(k);
    flat /= grid.count(k);
  }
  return multi;
}

std::vector<std::size_t> leading_axes(std::size_t len) {
  std::vector<std::size_t> axes(len);
  std::iota(axes.begin(), axes.end(), 0);
  return axes;
}

Mat sqrtm_spd(const Mat& m, bool inverse) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
    throw_domain("covariance not positive definite");
  Vec s = es.eigenvalues().array().sqrt();
  if (inverse) s = s.cwiseInverse();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

struct Item {
  std::size_t index;
  double mass;
};

class NorthWestRecursion {
 public:
  NorthWestRecursion(const DiscreteMeasure& source, const DiscreteMeasure& target)
      : src_(source.points()), tgt_(target.points()), d_(source.dimension()) {}

  void run(std::vector<Item> src, std::vector<Item> tgt, std::size_t axis, std::vector<PlanEntry>& out) const {
    if (src.empty() || tgt.empty()) return;
    if (axis == d_) {
      // Supports are distinct, so each side holds a single atom here.
      out.push_back({src.front().index, tgt.front().index, std::min(src.front().mass, tgt.front().mass)});
      return;
    }
    sort_lex(src, src_, axis);
    sort_lex(tgt, tgt_, axis);
    const auto gs = groups(src, src_, axis);
    const auto gt = groups(tgt, tgt_, axis);
    double total = 0.0;
    for (const auto& it : src) total += it.mass;
    const double tol = 1e-14 * total;

    std::size_t a = 0, b = 0;
    double ra = gs[0].mass, rb = gt[0].mass;
    while (a < gs.size() && b < gt.size()) {
      const double m = std::min(ra, rb);
      if (m > 0.0) {
        std::vector<Item> sub_s(src.begin() + static_cast<std::ptrdiff_t>(gs[a].begin),
                                src.begin() + static_cast<std::ptrdiff_t>(gs[a].end));
        std::vector<Item> sub_t(tgt.begin() + static_cast<std::ptrdiff_t>(gt[b].begin),
                                tgt.begin() + static_cast<std::ptrdiff_t>(gt[b].end));
        for (auto& it : sub_s) it.mass *= m / gs[a].mass;
        for (auto& it : sub_t) it.mass *= m / gt[b].mass;
        run(std::move(sub_s), std::move(sub_t), axis + 1, out);
      }
      ra -= m;
      rb -= m;
      if (ra <= tol && ++a < gs.size()) ra = gs[a].mass;
      if (rb <= tol && ++b < gt.size()) rb = gt[b].mass;
    }
  }

 private:
  struct Group {
    std::size_t begin, end;
    double mass;
  };

  static void sort_lex(std::vector<Item>& items, const Mat& pts, std::size_t axis) {
    std::sort(items.begin(), items.end(), [&](const Item& p, const Item& q) {
      for (auto k = static_cast<Eigen::Index>(axis); k < pts.cols(); ++k) {
        const double u = pts(static_cast<Eigen::Index>(p.index), k), v = pts(static_cast<Eigen::Index>(q.index), k);
        if (u != v) return u < v;
      }
      return false;
    });
  }

  static std::vector<Group> groups(const std::vector<Item>& items, const Mat& pts, std::size_t axis) {
    std::vector<Group> out;
    const auto k = static_cast<Eigen::Index>(axis);
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (out.empty() ||
          pts(static_cast<Eigen::Index>(items[i].index), k) != pts(static_cast<Eigen::Index>(items[i - 1].index), k))
        out.push_back({i, i, 0.0});
      out.back().end = i + 1;
      out.back().mass += items[i].mass;
    }
    return out;
  }

  const Mat& src_;
  const Mat& tgt_;
  std::size_t d_;
};

}  // namespace

TriangularMap::TriangularMap(GridSpec grid, std::vector<std::vector<double>> tables)
    : grid_(std::move(grid)), tables_(std::move(tables)) {
  if (tables_.size() != grid_.dimension()) throw_invalid("one table per component required");
  for (std::size_t i = 0; i < tables_.size(); ++i)
    if (tables_[i].size() != sub_size(grid_, i + 1)) throw_invalid("component table has the wrong size");
}

double TriangularMap::evaluate_component(std::size_t i, std::span<const double> x) const {
  if (i >= dimension() || x.size() <= i) throw_invalid("dimension mismatch");
  const std::size_t len = i + 1;
  std::vector<Cell> cells(len);
  for (std::size_t k = 0; k < len; ++k) cells[k] = locate(grid_.axis(k), x[k]);
  const auto& table = tables_[i];
  std::vector<std::size_t> multi(len);
  double value = 0.0;
  for (std::size_t corner = 0; corner < (std::size_t{1} << len); ++corner) {
    double w = 1.0;
    for (std::size_t k = 0; k < len; ++k) {
      const bool hi = (corner >> k) & 1U;
      multi[k] = cells[k].index + (hi ? 1 : 0);
      w *= hi ? cells[k].frac : 1.0 - cells[k].frac;
    }
    if (w != 0.0) value += w * table[sub_index(grid_, multi, len)];
  }
  return value;
}

Vec TriangularMap::evaluate(const Vec& x) const {
  if (static_cast<std::size_t>(x.size()) != dimension()) throw_invalid("dimension mismatch");
  Vec y(x.size());
  std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
  for (std::size_t i = 0; i < dimension(); ++i) y[static_cast<Eigen::Index>(i)] = evaluate_component(i, xs);
  return y;
}

MapTable TriangularMap::node_images() const {
  const std::size_t d = dimension();
  MapTable out(static_cast<Eigen::Index>(grid_.size()), static_cast<Eigen::Index>(d));
  for (std::size_t flat = 0; flat < grid_.size(); ++flat) {
    const auto multi = grid_.multi_index(flat);
    for (std::size_t i = 0; i < d; ++i)
      out(static_cast<Eigen::Index>(flat), static_cast<Eigen::Index>(i)) = tables_[i][sub_index(grid_, multi, i + 1)];
  }
  return out;
}

bool TriangularMap::is_monotone() const {
  for (std::size_t i = 0; i < dimension(); ++i) {
    const std::size_t n = grid_.count(i);
    const auto& t = tables_[i];
    for (std::size_t base = 0; base < t.size(); base += n)
      for (std::size_t k = 1; k < n; ++k)
        if (t[base + k] < t[base + k - 1]) return false;
  }
  return true;
}

MapTable AffineMap::apply_rows(const Mat& points) const {
  if (points.cols() != A.cols()) throw_invalid("dimension mismatch");
  MapTable out = points * A.transpose();
  out.rowwise() += b.transpose();
  return out;
}

std::vector<double> monotone_rearrangement_1d(const GridDensity& f, const GridDensity& g) {
  const CdfTable F = cdf_1d(f);
  const CdfTable G = cdf_1d(g);
  std::vector<double> out(F.values.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = quantile_1d(G, F.values[k]);
  return out;
}

TriangularMap kr_map_grid(const GridDensity& source, const GridDensity& target) {
  const std::size_t d = source.dimension();
  if (target.dimension() != d) throw_invalid("dimension mismatch");
  const GridSpec& grid = source.grid();
  std::vector<std::vector<double>> tables(d);
  for (std::size_t i = 0; i < d; ++i) {
    const auto axes = leading_axes(i + 1);
    const GridDensity src_i = marginal(source, axes);
    const GridDensity tgt_i = marginal(target, axes);
    const std::size_t n = grid.count(i);
    if (i == 0) {
      tables[0] = monotone_rearrangement_1d(src_i, tgt_i);
      continue;
    }
    tables[i].resize(sub_size(grid, i + 1));
    const std::size_t preds = sub_size(grid, i);
    // Null conditionals (far tails) carry no source mass; they take the
    // rearrangement of the coordinate-i marginals instead.
    const std::size_t only_i[] = {i};
    const std::vector<double> fallback = monotone_rearrangement_1d(marginal(source, only_i), marginal(target, only_i));
    std::vector<double> x(i), y(i);
    for (std::size_t p = 0; p < preds; ++p) {
      const auto multi = sub_multi(grid, p, i);
      for (std::size_t k = 0; k < i; ++k) {
        x[k] = grid.axis(k)[multi[k]];
        y[k] = tables[k][sub_index(grid, multi, k + 1)];
      }
      const auto src_slice = try_conditional_slice(src_i, i, x);
      const auto tgt_slice = src_slice ? try_conditional_slice(tgt_i, i, y) : std::nullopt;
      const auto images = tgt_slice ? monotone_rearrangement_1d(*src_slice, *tgt_slice) : fallback;
      std::copy(images.begin(), images.end(), tables[i].begin() + static_cast<std::ptrdiff_t>(p * n));
    }
  }
  return TriangularMap(grid, std::move(tables));
}

Coupling kr_plan_discrete(const DiscreteMeasure& source, const DiscreteMeasure& target) {
  if (source.dimension() != target.dimension()) throw_invalid("dimension mismatch");
  std::vector<Item> src, tgt;
  for (std::size_t i = 0; i < source.size(); ++i)
    if (source.weight(i) > 0.0) src.push_back({i, source.weight(i)});
  for (std::size_t j = 0; j < target.size(); ++j)
    if (target.weight(j) > 0.0) tgt.push_back({j, target.weight(j)});
  std::vector<PlanEntry> entries;
  NorthWestRecursion(source, target).run(std::move(src), std::move(tgt), 0, entries);
  return make_coupling(source, target, std::move(entries));
}

AffineMap kr_map_gaussian(const GaussianMeasure& source, const GaussianMeasure& target) {
  if (source.dimension() != target.dimension()) throw_invalid("dimension mismatch");
  const auto d = static_cast<Eigen::Index>(source.dimension());
  const Mat L0inv = source.cholesky().triangularView<Eigen::Lower>().solve(Mat::Identity(d, d));
  Mat A = (target.cholesky() * L0inv).triangularView<Eigen::Lower>();
  Vec b = target.mean() - A * source.mean();
  return {std::move(A), std::move(b)};
}

AffineMap brenier_gaussian_weighted(const GaussianMeasure& source, const GaussianMeasure& target,
                                    const WeightedCost& cost) {
  if (source.dimension() != target.dimension() || cost.dimension() != source.dimension())
    throw_invalid("dimension mismatch");
  const Vec a = cost.weights().array().sqrt();
  const Mat S0 = a.asDiagonal() * source.covariance() * a.asDiagonal();
  const Mat S1 = a.asDiagonal() * target.covariance() * a.asDiagonal();
  const Mat r = sqrtm_spd(S0, false);
  const Mat rinv = sqrtm_spd(S0, true);
  Mat middle = r * S1 * r;
  middle = 0.5 * (middle + middle.transpose());
  Mat S = rinv * sqrtm_spd(middle, false) * rinv;
  S = 0.5 * (S + S.transpose());
  Mat A = a.cwiseInverse().asDiagonal() * S * a.asDiagonal();
  Vec b = target.mean() - A * source.mean();
  return {std::move(A), std::move(b)};
}

double kr_jacobian_identity_check(const TriangularMap& map, const GridDensity& source, const GridDensity& target,
                                  double density_floor) {
  const std::size_t d = map.dimension();
  if (source.dimension() != d || target.dimension() != d) throw_invalid("dimension mismatch");
  if (!(source.grid() == map.grid())) throw_invalid("map and source grids differ");
  const GridSpec& grid = map.grid();
  double worst = 0.0;
  GridDensity src_prev, tgt_prev;
  for (std::size_t i = 0; i < d; ++i) {
    const auto axes = leading_axes(i + 1);
    const GridDensity src_i = marginal(source, axes);
    const GridDensity tgt_i = marginal(target, axes);
    const double floor = density_floor * *std::max_element(src_i.values().begin(), src_i.values().end());
    const auto& table = map.component(i);
    const auto& xi = grid.axis(i);
    std::vector<double> ty(i + 1);
    for (std::size_t flat = 0; flat < table.size(); ++flat) {
      auto multi = sub_multi(grid, flat, i + 1);
      const std::size_t k = multi[i];
      if (k == 0 || k + 1 == xi.size()) continue;
      const double joint = src_i.value(flat);
      if (joint < floor) continue;
      const double f_cond = i == 0 ? joint : joint / src_prev.value(flat / xi.size());
      for (std::size_t l = 0; l <= i; ++l) ty[l] = map.component(l)[sub_index(grid, multi, l + 1)];
      const double dT = (table[flat + 1] - table[flat - 1]) / (xi[k + 1] - xi[k - 1]);
      double g_cond = tgt_i.evaluate(ty);
      if (i > 0) {
        const double den = tgt_prev.evaluate(std::span<const double>(ty.data(), i));
        g_cond = den > 0.0 ? g_cond / den : std::numeric_limits<double>::infinity();
      }
      worst = std::max(worst, std::abs(g_cond * dT - f_cond) / f_cond);
    }
    src_prev = src_i;
    tgt_prev = tgt_i;
  }
  return worst;
}

}  // namespace krot
