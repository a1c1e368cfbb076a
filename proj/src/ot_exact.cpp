#include "krot/ot_exact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "krot/error.hpp"

namespace krot {

namespace {

// Primal network simplex on the complete bipartite graph rows x cols.
// The basis is a spanning tree with rows + cols - 1 arcs; potentials and
// parent pointers are rebuilt by a breadth-first sweep after every pivot.
class TransportSimplex {
 public:
  TransportSimplex(std::vector<double> supply, std::vector<double> demand, std::vector<double> cost)
      : n_(supply.size()), m_(demand.size()), supply_(std::move(supply)), demand_(std::move(demand)),
        cost_(std::move(cost)) {
    scale_ = 1.0;
    for (double c : cost_) scale_ = std::max(scale_, std::abs(c));
    tol_ = 1e-12 * scale_;
  }

  void run() {
    initial_basis();
    rebuild_tree();
    const std::size_t arcs = n_ * m_;
    const std::size_t block = std::max<std::size_t>(
        64, static_cast<std::size_t>(std::sqrt(static_cast<double>(arcs))));
    const std::size_t max_pivots = 100 * (n_ + m_) * (n_ + m_) + 10000;
    std::size_t cursor = 0;
    std::size_t degenerate_run = 0;
    bool bland = false;

    while (true) {
      std::size_t entering = arcs;
      if (bland) {
        for (std::size_t a = 0; a < arcs; ++a) {
          if (reduced(a) < -tol_) {
            entering = a;
            break;
          }
        }
      } else {
        std::size_t scanned = 0;
        while (scanned < arcs && entering == arcs) {
          double best = -tol_;
          const std::size_t stop = std::min(arcs, scanned + block);
          for (; scanned < stop; ++scanned) {
            const std::size_t a = cursor;
            cursor = cursor + 1 == arcs ? 0 : cursor + 1;
            const double rc = reduced(a);
            if (rc < best) {
              best = rc;
              entering = a;
            }
          }
        }
      }
      if (entering == arcs) break;
      if (++pivots_ > max_pivots) throw SolverError("network simplex exceeded pivot limit", 0.0);

      const bool degenerate = pivot(entering);
      if (degenerate) {
        if (++degenerate_run > 2 * (n_ + m_)) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }
    }
    recompute_flows();
  }

  std::size_t pivots() const { return pivots_; }
  const std::vector<double>& u() const { return u_; }
  const std::vector<double>& v() const { return v_; }

  std::vector<PlanEntry> entries() const {
    std::vector<PlanEntry> out;
    out.reserve(basis_.size());
    for (const auto& e : basis_)
      if (e.flow > 0.0) out.push_back({e.row, e.col, e.flow});
    return out;
  }

 private:
  struct BasisArc {
    std::size_t row;
    std::size_t col;
    double flow;
  };

  double reduced(std::size_t arc) const {
    const std::size_t r = arc / m_, c = arc % m_;
    return cost_[arc] - u_[r] - v_[c];
  }

  // Node ids: rows are [0, n), columns are [n, n + m).
  void add_arc(std::size_t r, std::size_t c, double flow) {
    const std::size_t id = basis_.size();
    basis_.push_back({r, c, std::max(flow, 0.0)});
    adjacency_[r].push_back(id);
    adjacency_[n_ + c].push_back(id);
  }

  void initial_basis() {
    adjacency_.assign(n_ + m_, {});
    basis_.clear();
    basis_.reserve(n_ + m_ - 1);
    // North-west corner rule: every step advances exactly one index, which
    // yields a spanning tree even when intermediate flows are zero.
    std::size_t i = 0, j = 0;
    double ra = supply_[0], rb = demand_[0];
    while (true) {
      if (i + 1 == n_ && j + 1 == m_) {
        add_arc(i, j, ra);
        break;
      }
      if (i + 1 == n_) {
        add_arc(i, j, rb);
        ra -= rb;
        rb = demand_[++j];
      } else if (j + 1 == m_) {
        add_arc(i, j, ra);
        rb -= ra;
        ra = supply_[++i];
      } else if (ra < rb) {
        add_arc(i, j, ra);
        rb -= ra;
        ra = supply_[++i];
      } else {
        add_arc(i, j, rb);
        ra -= rb;
        rb = demand_[++j];
      }
    }
  }

  void rebuild_tree() {
    const std::size_t nodes = n_ + m_;
    parent_.assign(nodes, nodes);
    parent_arc_.assign(nodes, basis_.size());
    depth_.assign(nodes, 0);
    order_.clear();
    order_.reserve(nodes);
    u_.assign(n_, 0.0);
    v_.assign(m_, 0.0);
    std::vector<bool> seen(nodes, false);
    seen[0] = true;
    order_.push_back(0);
    for (std::size_t head = 0; head < order_.size(); ++head) {
      const std::size_t x = order_[head];
      for (std::size_t id : adjacency_[x]) {
        const auto& e = basis_[id];
        const std::size_t y = (x < n_) ? n_ + e.col : e.row;
        if (seen[y]) continue;
        seen[y] = true;
        parent_[y] = x;
        parent_arc_[y] = id;
        depth_[y] = depth_[x] + 1;
        const double c = cost_[e.row * m_ + e.col];
        if (y >= n_) v_[e.col] = c - u_[e.row];
        else u_[e.row] = c - v_[e.col];
        order_.push_back(y);
      }
    }
    if (order_.size() != nodes) throw Error(ErrorCode::kInternal, "transport basis is not spanning");
  }

  // Returns true when the pivot moved zero flow.
  bool pivot(std::size_t arc) {
    const std::size_t r = arc / m_, c = arc % m_;
    std::size_t a = r, b = n_ + c;
    std::vector<std::size_t>& minus = scratch_minus_;
    std::vector<std::size_t>& plus = scratch_plus_;
    minus.clear();
    plus.clear();
    std::size_t step_a = 0, step_b = 0;
    while (a != b) {
      if (depth_[a] >= depth_[b]) {
        (step_a++ % 2 == 0 ? minus : plus).push_back(parent_arc_[a]);
        a = parent_[a];
      } else {
        (step_b++ % 2 == 0 ? minus : plus).push_back(parent_arc_[b]);
        b = parent_[b];
      }
    }
    // Ties on the leaving arc go to the smallest arc index.
    std::size_t leaving = basis_.size();
    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t id : minus) {
      const double f = basis_[id].flow;
      const bool better = f < theta || (f == theta && arc_key(id) < arc_key(leaving));
      if (better) {
        theta = f;
        leaving = id;
      }
    }
    for (std::size_t id : minus) basis_[id].flow = std::max(0.0, basis_[id].flow - theta);
    for (std::size_t id : plus) basis_[id].flow += theta;

    const BasisArc old = basis_[leaving];
    auto drop = [&](std::size_t node) {
      auto& adj = adjacency_[node];
      adj.erase(std::find(adj.begin(), adj.end(), leaving));
    };
    drop(old.row);
    drop(n_ + old.col);
    basis_[leaving] = {r, c, theta};
    adjacency_[r].push_back(leaving);
    adjacency_[n_ + c].push_back(leaving);
    rebuild_tree();
    return theta == 0.0;
  }

  std::size_t arc_key(std::size_t id) const {
    if (id >= basis_.size()) return std::numeric_limits<std::size_t>::max();
    return basis_[id].row * m_ + basis_[id].col;
  }

  // Tree flows are determined by the marginals; recomputing them from the
  // leaves removes drift accumulated over pivots.
  void recompute_flows() {
    std::vector<double> excess(n_ + m_);
    for (std::size_t i = 0; i < n_; ++i) excess[i] = supply_[i];
    for (std::size_t j = 0; j < m_; ++j) excess[n_ + j] = demand_[j];
    for (std::size_t k = order_.size(); k-- > 1;) {
      const std::size_t x = order_[k];
      const std::size_t id = parent_arc_[x];
      const double f = excess[x];
      basis_[id].flow = std::max(0.0, f);
      excess[parent_[x]] -= f;
    }
  }

  std::size_t n_, m_;
  std::vector<double> supply_, demand_, cost_;
  double scale_ = 1.0, tol_ = 0.0;
  std::vector<BasisArc> basis_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::vector<std::size_t> parent_, parent_arc_, depth_, order_;
  std::vector<double> u_, v_;
  std::vector<std::size_t> scratch_minus_, scratch_plus_;
  std::size_t pivots_ = 0;
};

}  // namespace

// ---------------------------------------------------------------- Coupling

Vec Coupling::row_sums() const {
  Vec s = Vec::Zero(static_cast<Eigen::Index>(rows()));
  for (const auto& e : entries) s[static_cast<Eigen::Index>(e.row)] += e.mass;
  return s;
}

Vec Coupling::col_sums() const {
  Vec s = Vec::Zero(static_cast<Eigen::Index>(cols()));
  for (const auto& e : entries) s[static_cast<Eigen::Index>(e.col)] += e.mass;
  return s;
}

double Coupling::total_mass() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.mass;
  return s;
}

Mat Coupling::dense() const {
  Mat P = Mat::Zero(static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
  for (const auto& e : entries) P(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.col)) += e.mass;
  return P;
}

Coupling make_coupling(DiscreteMeasure source, DiscreteMeasure target, std::vector<PlanEntry> entries) {
  if (source.dimension() != target.dimension()) throw_invalid("dimension mismatch");
  std::sort(entries.begin(), entries.end(), [](const PlanEntry& a, const PlanEntry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<PlanEntry> merged;
  merged.reserve(entries.size());
  for (const auto& e : entries) {
    if (e.row >= source.size() || e.col >= target.size()) throw_invalid("plan entry out of range");
    if (!merged.empty() && merged.back().row == e.row && merged.back().col == e.col) merged.back().mass += e.mass;
    else merged.push_back(e);
  }
  std::erase_if(merged, [](const PlanEntry& e) { return !(e.mass > 0.0); });
  return Coupling{std::move(source), std::move(target), std::move(merged)};
}

// ------------------------------------------------------------------ solver

TransportResult solve_transport(const Vec& a, const Vec& b, const Mat& cost) {
  const auto n = a.size(), m = b.size();
  if (cost.rows() != n || cost.cols() != m) throw_invalid("shape mismatch");
  if (n == 0 || m == 0) throw_invalid("shape mismatch");
  if (static_cast<std::size_t>(n) > kMaxExactAtoms || static_cast<std::size_t>(m) > kMaxExactAtoms)
    throw_invalid("instance exceeds the exact-solver size limit; use the entropic solver");
  if (!cost.allFinite()) throw_invalid("cost matrix must be finite");
  const double sa = a.sum(), sb = b.sum();
  if ((a.array() < 0.0).any() || (b.array() < 0.0).any()) throw_domain("negative marginal");
  if (!(sa > 0.0) || std::abs(sa - sb) > 1e-9 * std::max(sa, sb)) throw_domain("marginal masses differ");

  // Zero-mass atoms carry no flow; solve on the positive part only.
  std::vector<Eigen::Index> rows, cols;
  for (Eigen::Index i = 0; i < n; ++i)
    if (a[i] > 0.0) rows.push_back(i);
  for (Eigen::Index j = 0; j < m; ++j)
    if (b[j] > 0.0) cols.push_back(j);
  std::vector<double> supply(rows.size()), demand(cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i) supply[i] = a[rows[i]];
  for (std::size_t j = 0; j < cols.size(); ++j) demand[j] = b[cols[j]] * (sa / sb);
  std::vector<double> reduced_cost(rows.size() * cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) reduced_cost[i * cols.size() + j] = cost(rows[i], cols[j]);

  TransportSimplex simplex(std::move(supply), std::move(demand), std::move(reduced_cost));
  simplex.run();

  TransportResult result;
  result.pivots = simplex.pivots();
  result.source_potential = Vec::Constant(n, std::numeric_limits<double>::infinity());
  result.target_potential = Vec::Constant(m, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < rows.size(); ++i) result.source_potential[rows[i]] = simplex.u()[i];
  for (std::size_t j = 0; j < cols.size(); ++j) result.target_potential[cols[j]] = simplex.v()[j];
  // c-transforms extend the potentials to zero-mass atoms.
  for (Eigen::Index j = 0; j < m; ++j) {
    if (b[j] > 0.0) continue;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i : rows) best = std::min(best, cost(i, j) - result.source_potential[i]);
    result.target_potential[j] = best;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (a[i] > 0.0) continue;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) best = std::min(best, cost(i, j) - result.target_potential[j]);
    result.source_potential[i] = best;
  }
  for (const auto& e : simplex.entries()) {
    const auto r = static_cast<std::size_t>(rows[e.row]);
    const auto c = static_cast<std::size_t>(cols[e.col]);
    result.entries.push_back({r, c, e.mass});
    result.value += e.mass * cost(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  std::sort(result.entries.begin(), result.entries.end(), [](const PlanEntry& x, const PlanEntry& y) {
    return x.row != y.row ? x.row < y.row : x.col < y.col;
  });
  return result;
}

ExactSolution solve_exact(const DiscreteMeasure& source, const DiscreteMeasure& target, const Mat& cost) {
  if (cost.rows() != static_cast<Eigen::Index>(source.size()) ||
      cost.cols() != static_cast<Eigen::Index>(target.size()))
    throw_invalid("shape mismatch");
  TransportResult t = solve_transport(source.weights(), target.weights(), cost);
  ExactSolution out;
  out.plan = make_coupling(source, target, std::move(t.entries));
  out.value = t.value;
  out.source_potential = std::move(t.source_potential);
  out.target_potential = std::move(t.target_potential);
  out.pivots = t.pivots;
  return out;
}

double slackness_residual(const ExactSolution& solution, const Mat& cost) {
  const double scale = std::max(1.0, cost.cwiseAbs().maxCoeff());
  const Vec& u = solution.source_potential;
  const Vec& v = solution.target_potential;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < cost.cols(); ++j)
    for (Eigen::Index i = 0; i < cost.rows(); ++i) worst = std::max(worst, u[i] + v[j] - cost(i, j));
  for (const auto& e : solution.plan.entries) {
    const auto i = static_cast<Eigen::Index>(e.row), j = static_cast<Eigen::Index>(e.col);
    worst = std::max(worst, std::abs(cost(i, j) - u[i] - v[j]));
  }
  return worst / scale;
}

// ------------------------------------------------------------ diagnostics

MapTable barycentric_map(const Coupling& plan) {
  const Vec& mu = plan.source.weights();
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    if (!(mu[i] > 0.0)) throw_domain("undefined barycenter");
  MapTable T = MapTable::Zero(static_cast<Eigen::Index>(plan.rows()), static_cast<Eigen::Index>(plan.source.dimension()));
  Vec row_mass = Vec::Zero(mu.size());
  for (const auto& e : plan.entries) {
    const auto i = static_cast<Eigen::Index>(e.row);
    T.row(i) += e.mass * plan.target.points().row(static_cast<Eigen::Index>(e.col));
    row_mass[i] += e.mass;
  }
  for (Eigen::Index i = 0; i < T.rows(); ++i) {
    if (!(row_mass[i] > 0.0)) throw_domain("undefined barycenter");
    T.row(i) /= row_mass[i];
  }
  return T;
}

Coupling map_plan(const DiscreteMeasure& source, const MapTable& images) {
  if (images.rows() != static_cast<Eigen::Index>(source.size()) ||
      images.cols() != static_cast<Eigen::Index>(source.dimension()))
    throw_invalid("support mismatch");
  // Distinct images become target atoms.
  std::map<std::vector<double>, std::size_t> index;
  std::vector<std::size_t> target_of(source.size());
  std::vector<std::vector<double>> pts;
  for (Eigen::Index i = 0; i < images.rows(); ++i) {
    std::vector<double> key(static_cast<std::size_t>(images.cols()));
    for (Eigen::Index c = 0; c < images.cols(); ++c) key[static_cast<std::size_t>(c)] = images(i, c);
    auto [it, inserted] = index.emplace(key, pts.size());
    if (inserted) pts.push_back(key);
    target_of[static_cast<std::size_t>(i)] = it->second;
  }
  Mat tp(static_cast<Eigen::Index>(pts.size()), images.cols());
  Vec tw = Vec::Zero(tp.rows());
  for (std::size_t k = 0; k < pts.size(); ++k)
    for (Eigen::Index c = 0; c < tp.cols(); ++c) tp(static_cast<Eigen::Index>(k), c) = pts[k][static_cast<std::size_t>(c)];
  std::vector<PlanEntry> entries;
  for (std::size_t i = 0; i < source.size(); ++i) {
    tw[static_cast<Eigen::Index>(target_of[i])] += source.weight(i);
    entries.push_back({i, target_of[i], source.weight(i)});
  }
  return make_coupling(source, DiscreteMeasure(std::move(tp), std::move(tw)), std::move(entries));
}

std::pair<DiscreteMeasure, DiscreteMeasure> plan_marginals(const Coupling& plan) {
  return {DiscreteMeasure(plan.source.points(), plan.row_sums()),
          DiscreteMeasure(plan.target.points(), plan.col_sums())};
}

double plan_cost(const Coupling& plan, const Mat& cost) {
  if (cost.rows() != static_cast<Eigen::Index>(plan.rows()) || cost.cols() != static_cast<Eigen::Index>(plan.cols()))
    throw_invalid("shape mismatch");
  double s = 0.0;
  for (const auto& e : plan.entries) s += e.mass * cost(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.col));
  return s;
}

double map_distance_l2(const MapTable& a, const MapTable& b, const DiscreteMeasure& source) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() != static_cast<Eigen::Index>(source.size()))
    throw_invalid("support mismatch");
  return std::sqrt(source.weights().dot((a - b).rowwise().squaredNorm()));
}

}  // namespace krot
