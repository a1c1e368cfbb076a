#include "krot/ot_soft.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "krot/error.hpp"

namespace krot {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const double* x, std::size_t n, std::size_t stride = 1) {
  double mx = kNegInf;
  for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, x[k * stride]);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += std::exp(x[k * stride] - mx);
  return mx + std::log(s);
}

double median_of(const Mat& cost) {
  std::vector<double> v(cost.data(), cost.data() + cost.size());
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

void check_soft_inputs(const DiscreteMeasure& source, const DiscreteMeasure& target, const Mat& cost, double lambda) {
  if (cost.rows() != static_cast<Eigen::Index>(source.size()) ||
      cost.cols() != static_cast<Eigen::Index>(target.size()))
    throw_invalid("shape mismatch");
  if (!(lambda > 0.0)) throw_domain("lambda must be positive");
  if (!cost.allFinite()) throw_invalid("cost matrix must be finite");
  for (Eigen::Index j = 0; j < target.weights().size(); ++j)
    if (!(target.weights()[j] > 0.0)) throw_domain("target atoms must carry positive mass");
}

// Shared post-processing: objective terms, density ratio and D(x).
void finish_solution(SoftSolution& sol, const Mat& cost) {
  const Vec q = sol.plan.col_sums();
  const Vec& nu = sol.plan.target.weights();
  sol.transport = plan_cost(sol.plan, cost);
  sol.kl = kl_divergence(q, nu);
  sol.objective = sol.lambda * sol.kl + sol.transport;
  sol.g = q.cwiseQuotient(nu);
  sol.log_g = sol.g.array().log();
  sol.log_D.resize(cost.rows());
  std::vector<double> buf(static_cast<std::size_t>(cost.cols()));
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    for (Eigen::Index j = 0; j < cost.cols(); ++j)
      buf[static_cast<std::size_t>(j)] = -cost(i, j) / sol.lambda + std::log(nu[j]);
    sol.log_D[i] = log_sum_exp(buf.data(), buf.size());
  }
}

// ------------------------------------------------------ exact active set
//
// At the optimum the plan lives on a forest of tight arcs (C_ij = a_i + b_j)
// and the second marginal is q_j = nu_j exp(-b_j / lambda). Within one tree
// the potentials are fixed up to a shift, and the shift is pinned in closed
// form by requiring the tree's q-mass to equal its mu-mass. A candidate forest
// is therefore evaluated exactly; repairs drop arcs with negative flow or add
// arcs with negative reduced cost until the KKT conditions hold.
class SoftActiveSet {
 public:
  struct Arc {
    std::size_t row;
    std::size_t col;
  };

  struct Evaluation {
    bool valid = false;
    std::size_t isolated = 0;  // node id when !valid
    std::vector<double> flow;
    std::vector<double> a, b, log_q;
    std::vector<std::size_t> component, parent, parent_arc, depth;
    double min_flow = 0.0;
    std::size_t min_flow_arc = 0;
    double min_rc = 0.0;
    std::size_t rc_row = 0, rc_col = 0;
    double imbalance = 0.0;
    double residual = std::numeric_limits<double>::infinity();
  };

  SoftActiveSet(std::vector<double> mu, std::vector<double> log_nu, const Mat& cost, double lambda)
      : n_(mu.size()), m_(log_nu.size()), mu_(std::move(mu)), log_nu_(std::move(log_nu)), cost_(cost), lambda_(lambda) {
    scale_ = std::max(1.0, cost_.cwiseAbs().maxCoeff());
  }

  Evaluation evaluate(const std::vector<Arc>& arcs) const {
    Evaluation ev;
    const std::size_t nodes = n_ + m_;
    std::vector<std::vector<std::size_t>> adj(nodes);
    for (std::size_t k = 0; k < arcs.size(); ++k) {
      adj[arcs[k].row].push_back(k);
      adj[n_ + arcs[k].col].push_back(k);
    }
    for (std::size_t x = 0; x < nodes; ++x) {
      if (adj[x].empty()) {
        ev.isolated = x;
        return ev;
      }
    }
    ev.a.assign(n_, 0.0);
    ev.b.assign(m_, 0.0);
    ev.log_q.assign(m_, 0.0);
    ev.flow.assign(arcs.size(), 0.0);
    ev.component.assign(nodes, nodes);
    ev.parent.assign(nodes, nodes);
    ev.parent_arc.assign(nodes, arcs.size());
    ev.depth.assign(nodes, 0);

    std::vector<double> excess(nodes, 0.0);
    std::vector<std::size_t> order;
    std::vector<double> terms;
    std::size_t comp_count = 0;
    for (std::size_t root = 0; root < nodes; ++root) {
      if (ev.component[root] != nodes) continue;
      const std::size_t comp = comp_count++;
      order.clear();
      order.push_back(root);
      ev.component[root] = comp;
      for (std::size_t head = 0; head < order.size(); ++head) {
        const std::size_t x = order[head];
        for (std::size_t id : adj[x]) {
          const std::size_t y = x < n_ ? n_ + arcs[id].col : arcs[id].row;
          if (ev.component[y] != nodes) continue;
          ev.component[y] = comp;
          ev.parent[y] = x;
          ev.parent_arc[y] = id;
          ev.depth[y] = ev.depth[x] + 1;
          const double c = cost_(static_cast<Eigen::Index>(arcs[id].row), static_cast<Eigen::Index>(arcs[id].col));
          if (y >= n_) ev.b[y - n_] = c - ev.a[arcs[id].row];
          else ev.a[y] = c - ev.b[arcs[id].col];
          order.push_back(y);
        }
      }
      // Shift pinned by mass balance inside the component.
      double mass = 0.0;
      terms.clear();
      for (std::size_t x : order) {
        if (x < n_) mass += mu_[x];
        else terms.push_back(log_nu_[x - n_] - ev.b[x - n_] / lambda_);
      }
      const double shift = lambda_ * (log_sum_exp(terms.data(), terms.size()) - std::log(mass));
      for (std::size_t x : order) {
        if (x < n_) {
          ev.a[x] -= shift;
          excess[x] = mu_[x];
        } else {
          const std::size_t j = x - n_;
          ev.b[j] += shift;
          ev.log_q[j] = log_nu_[j] - ev.b[j] / lambda_;
          excess[x] = std::exp(ev.log_q[j]);
        }
      }
      for (std::size_t k = order.size(); k-- > 1;) {
        const std::size_t x = order[k];
        ev.flow[ev.parent_arc[x]] = excess[x];
        excess[ev.parent[x]] -= excess[x];
      }
      ev.imbalance = std::max(ev.imbalance, std::abs(excess[root]));
    }

    ev.min_flow = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < arcs.size(); ++k) {
      if (ev.flow[k] < ev.min_flow) {
        ev.min_flow = ev.flow[k];
        ev.min_flow_arc = k;
      }
    }
    ev.min_rc = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m_; ++j) {
      for (std::size_t i = 0; i < n_; ++i) {
        const double rc = cost_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - ev.a[i] - ev.b[j];
        if (rc < ev.min_rc) {
          ev.min_rc = rc;
          ev.rc_row = i;
          ev.rc_col = j;
        }
      }
    }
    ev.valid = true;
    ev.residual = std::max({std::max(0.0, -ev.min_flow), std::max(0.0, -ev.min_rc) / scale_, ev.imbalance});
    return ev;
  }

  /// Repairs the forest in place; returns true once the residual is below tol.
  bool solve(std::vector<Arc>& arcs, double tol, std::size_t max_repairs, Evaluation& ev) const {
    for (std::size_t step = 0; step <= max_repairs; ++step) {
      ev = evaluate(arcs);
      if (!ev.valid) {
        attach(arcs, ev.isolated);
        continue;
      }
      if (ev.residual <= tol) return true;
      const double flow_violation = -ev.min_flow;
      const double rc_violation = -ev.min_rc / scale_;
      if (flow_violation >= rc_violation) {
        arcs.erase(arcs.begin() + static_cast<std::ptrdiff_t>(ev.min_flow_arc));
        continue;
      }
      const std::size_t r = ev.rc_row, c = ev.rc_col;
      if (ev.component[r] != ev.component[n_ + c]) {
        arcs.push_back({r, c});
        continue;
      }
      // Same tree: push flow around the cycle closed by (r, c).
      std::size_t x = r, y = n_ + c, sx = 0, sy = 0;
      std::vector<std::size_t> minus;
      while (x != y) {
        if (ev.depth[x] >= ev.depth[y]) {
          if (sx++ % 2 == 0) minus.push_back(ev.parent_arc[x]);
          x = ev.parent[x];
        } else {
          if (sy++ % 2 == 0) minus.push_back(ev.parent_arc[y]);
          y = ev.parent[y];
        }
      }
      std::size_t leaving = minus.front();
      for (std::size_t id : minus)
        if (ev.flow[id] < ev.flow[leaving]) leaving = id;
      arcs[leaving] = {r, c};
    }
    return false;
  }

  std::vector<Arc> forest_from_scores(const std::vector<double>& log_plan) const {
    // Candidate arcs: per-row and per-column maxima plus every entry within a
    // factor 1e3 of either; Kruskal keeps the heaviest acyclic subset.
    std::vector<double> row_max(n_, kNegInf), col_max(m_, kNegInf);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < m_; ++j) {
        const double v = log_plan[i * m_ + j];
        row_max[i] = std::max(row_max[i], v);
        col_max[j] = std::max(col_max[j], v);
      }
    const double cut = std::log(1e-3);
    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < m_; ++j) {
        const double v = log_plan[i * m_ + j];
        if (v >= row_max[i] + cut || v >= col_max[j] + cut) cand.push_back(i * m_ + j);
      }
    std::stable_sort(cand.begin(), cand.end(),
                     [&](std::size_t p, std::size_t q) { return log_plan[p] > log_plan[q]; });
    std::vector<std::size_t> uf(n_ + m_);
    std::iota(uf.begin(), uf.end(), 0);
    auto find = [&](std::size_t x) {
      while (uf[x] != x) x = uf[x] = uf[uf[x]];
      return x;
    };
    std::vector<Arc> arcs;
    for (std::size_t p : cand) {
      const std::size_t i = p / m_, j = p % m_;
      const std::size_t ri = find(i), rj = find(n_ + j);
      if (ri == rj) continue;
      uf[ri] = rj;
      arcs.push_back({i, j});
    }
    return arcs;
  }

 private:
  void attach(std::vector<Arc>& arcs, std::size_t node) const {
    if (node < n_) {
      Eigen::Index j = 0;
      cost_.row(static_cast<Eigen::Index>(node)).minCoeff(&j);
      arcs.push_back({node, static_cast<std::size_t>(j)});
    } else {
      Eigen::Index i = 0;
      cost_.col(static_cast<Eigen::Index>(node - n_)).minCoeff(&i);
      arcs.push_back({static_cast<std::size_t>(i), node - n_});
    }
  }

  std::size_t n_, m_;
  std::vector<double> mu_, log_nu_;
  const Mat& cost_;
  double lambda_;
  double scale_ = 1.0;
};

}  // namespace

DiscreteMeasure SoftSolution::perturbed_target() const {
  return DiscreteMeasure(plan.target.points(), plan.col_sums());
}

double kl_divergence(const Vec& q, const Vec& reference) {
  if (q.size() != reference.size()) throw_invalid("support mismatch");
  double s = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q[i] <= 0.0) continue;
    if (reference[i] <= 0.0) return std::numeric_limits<double>::infinity();
    s += q[i] * std::log(q[i] / reference[i]);
  }
  return std::max(s, 0.0);
}

double kl_divergence(const DiscreteMeasure& q, const DiscreteMeasure& reference) {
  return kl_divergence(q.weights(), reference.weights());
}

double soft_objective(const Coupling& plan, const Mat& cost, double lambda) {
  return lambda * kl_divergence(plan.col_sums(), plan.target.weights()) + plan_cost(plan, cost);
}

// ------------------------------------------------------------- sinkhorn

SoftSolution semi_relaxed_sinkhorn(const DiscreteMeasure& source, const DiscreteMeasure& target, const Mat& cost,
                                   const SinkhornOptions& options) {
  check_soft_inputs(source, target, cost, options.lambda);
  if (!(options.eta > 0.0)) throw_domain("eta must be positive");
  if (!(options.tolerance > 0.0)) throw_invalid("tolerance must be positive");
  const std::size_t n = source.size(), m = target.size();
  const double lambda = options.lambda;
  const double median = std::max(median_of(cost), std::numeric_limits<double>::min());
  const Vec& mu = source.weights();
  const Vec& nu = target.weights();

  std::vector<double> schedule;
  if (options.anneal) {
    if (!(options.anneal_factor > 0.0 && options.anneal_factor < 1.0)) throw_invalid("anneal factor must be in (0,1)");
    for (double e = std::max(options.eta, median / 10.0); e > options.eta; e *= options.anneal_factor)
      schedule.push_back(e);
  }
  schedule.push_back(options.eta);

  // Potentials: P_ij = exp((f_i + h_j - C_ij) / eta).
  Vec f = Vec::Zero(static_cast<Eigen::Index>(n));
  Vec h = Vec::Zero(static_cast<Eigen::Index>(m));
  Vec log_mu(mu.size()), log_nu(nu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) log_mu[i] = mu[i] > 0.0 ? std::log(mu[i]) : kNegInf;
  for (Eigen::Index j = 0; j < nu.size(); ++j) log_nu[j] = std::log(nu[j]);

  SoftSolution sol;
  sol.lambda = lambda;
  sol.epsilon = options.epsilon;
  sol.eta = options.eta;
  sol.method = "semi-relaxed-sinkhorn";
  std::size_t iterations = 0;
  double violation = std::numeric_limits<double>::infinity();
  std::vector<double> buf(std::max(n, m));
  Mat cost_t = cost.transpose();  // contiguous columns for the column pass

  auto row_pass = [&](double eta) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      if (log_mu[ii] == kNegInf) {
        f[ii] = kNegInf;
        continue;
      }
      for (std::size_t j = 0; j < m; ++j) buf[j] = (h[static_cast<Eigen::Index>(j)] - cost_t(static_cast<Eigen::Index>(j), ii)) / eta;
      f[ii] = eta * (log_mu[ii] - log_sum_exp(buf.data(), m));
    }
  };

  for (double eta : schedule) {
    const double kappa = std::isinf(lambda) ? 1.0 : lambda / (lambda + eta);
    bool use_log = options.log_domain == LogDomain::kAlways ||
                   (options.log_domain == LogDomain::kAuto && eta < 1e-3 * median);
    if (!use_log) {
      // Scaling form u = mu / (K v), v = (nu / K^T u)^kappa.
      // std::exp, not Eigen's packet exp: the latter clamps instead of underflowing to zero
      const auto scaled_exp = [eta](double x) { return std::exp(x / eta); };
      Mat K = (-cost).unaryExpr(scaled_exp);
      Vec u = f.unaryExpr(scaled_exp);
      Vec v = h.unaryExpr(scaled_exp);
      for (Eigen::Index i = 0; i < u.size(); ++i)
        if (log_mu[i] == kNegInf) u[i] = 0.0;
      bool underflow = false;
      while (iterations < options.max_iterations) {
        Vec Kv = K * v;
        for (Eigen::Index i = 0; i < Kv.size(); ++i) {
          if (mu[i] > 0.0 && !(Kv[i] > 0.0 && std::isfinite(Kv[i]))) underflow = true;
          u[i] = mu[i] > 0.0 ? mu[i] / Kv[i] : 0.0;
        }
        Vec Ktu = K.transpose() * u;
        for (Eigen::Index j = 0; j < Ktu.size(); ++j) {
          if (!(Ktu[j] > 0.0 && std::isfinite(Ktu[j]))) underflow = true;
          v[j] = std::pow(nu[j] / Ktu[j], kappa);
        }
        if (underflow || !u.allFinite() || !v.allFinite()) break;
        ++iterations;
        violation = (u.cwiseProduct(K * v) - mu).lpNorm<1>();
        if (violation < options.tolerance) break;
      }
      if (underflow || !u.allFinite() || !v.allFinite()) {
        if (options.log_domain == LogDomain::kNever) throw SolverError("use log-domain", violation);
        use_log = true;  // restart this stage from the last finite potentials
      } else {
        for (Eigen::Index i = 0; i < u.size(); ++i) f[i] = u[i] > 0.0 ? eta * std::log(u[i]) : kNegInf;
        for (Eigen::Index j = 0; j < v.size(); ++j) h[j] = eta * std::log(v[j]);
      }
    }
    if (use_log) {
      for (Eigen::Index j = 0; j < h.size(); ++j)
        if (!std::isfinite(h[j])) h[j] = 0.0;
      while (iterations < options.max_iterations) {
        row_pass(eta);
        for (std::size_t j = 0; j < m; ++j) {
          const auto jj = static_cast<Eigen::Index>(j);
          for (std::size_t i = 0; i < n; ++i) buf[i] = (f[static_cast<Eigen::Index>(i)] - cost(static_cast<Eigen::Index>(i), jj)) / eta;
          h[jj] = kappa * eta * (log_nu[jj] - log_sum_exp(buf.data(), n));
        }
        ++iterations;
        violation = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const auto ii = static_cast<Eigen::Index>(i);
          if (log_mu[ii] == kNegInf) continue;
          for (std::size_t j = 0; j < m; ++j) buf[j] = (h[static_cast<Eigen::Index>(j)] - cost_t(static_cast<Eigen::Index>(j), ii)) / eta;
          violation += std::abs(std::exp(f[ii] / eta + log_sum_exp(buf.data(), m)) - mu[ii]);
        }
        if (violation < options.tolerance) break;
      }
    }
    sol.eta_trace.push_back(eta);
    if (violation >= options.tolerance) {
      SolverError err("sinkhorn stalled (row violation " + std::to_string(violation) + ")", violation);
      throw err;
    }
  }
  // Final row projection makes the source constraint exact.
  row_pass(options.eta);

  std::vector<PlanEntry> entries;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (f[ii] == kNegInf) continue;
    for (std::size_t j = 0; j < m; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double p = std::exp((f[ii] + h[jj] - cost(ii, jj)) / options.eta);
      if (p > 0.0) entries.push_back({i, j, p});
    }
  }
  sol.plan = make_coupling(source, target, std::move(entries));
  sol.phi = -f;
  sol.iterations = iterations;
  sol.residual = violation;
  finish_solution(sol, cost);
  return sol;
}

// ---------------------------------------------------------------- oracle

SoftSolution exact_soft_oracle(const DiscreteMeasure& source, const DiscreteMeasure& target, const Mat& cost,
                               const OracleOptions& options) {
  check_soft_inputs(source, target, cost, options.lambda);
  if (source.size() > kMaxOracleAtoms || target.size() > kMaxOracleAtoms)
    throw_invalid("instance exceeds the exact soft solver size limit");
  const double lambda = options.lambda;
  const Vec& mu = source.weights();
  const Vec& nu = target.weights();
  const std::size_t m = target.size();

  // Zero-mass source atoms carry no flow; solve on the rest.
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    if (mu[i] > 0.0) rows.push_back(i);
  const std::size_t n = rows.size();
  Mat sub(static_cast<Eigen::Index>(n), cost.cols());
  std::vector<double> mu_sub(n), log_nu(m);
  for (std::size_t k = 0; k < n; ++k) {
    sub.row(static_cast<Eigen::Index>(k)) = cost.row(rows[k]);
    mu_sub[k] = mu[rows[k]];
  }
  for (std::size_t j = 0; j < m; ++j) log_nu[j] = std::log(nu[static_cast<Eigen::Index>(j)]);

  SoftActiveSet solver(mu_sub, log_nu, sub, lambda);
  SoftActiveSet::Evaluation ev;
  std::vector<SoftActiveSet::Arc> arcs;
  const std::size_t repairs = 4 * (n + m) + 200;
  bool done = false;
  std::size_t iterations = 0;
  double best_residual = std::numeric_limits<double>::infinity();

  // Start 1: support of the hard plan (exact when lambda is large).
  {
    Vec mu_vec = Eigen::Map<const Vec>(mu_sub.data(), static_cast<Eigen::Index>(n));
    TransportResult hard = solve_transport(mu_vec, nu, sub);
    for (const auto& e : hard.entries) arcs.push_back({e.row, e.col});
    done = solver.solve(arcs, options.tolerance, repairs, ev);
    if (ev.valid) best_residual = std::min(best_residual, ev.residual);
  }

  // Start 2..: supports of mirror-descent iterates, log P += -C/lambda + log(nu/q).
  if (!done) {
    std::vector<double> L(n * m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) L[i * m + j] = std::log(mu_sub[i]) + log_nu[j];
    std::vector<double> log_q(m), col(n);
    const std::size_t checkpoints[] = {10, 50, 200, 1000, 4000, 20000, 100000};
    std::size_t next = 0;
    while (!done && iterations < options.max_iterations) {
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = L[i * m + j];
        log_q[j] = log_sum_exp(col.data(), n);
      }
      for (std::size_t i = 0; i < n; ++i) {
        double* row = &L[i * m];
        for (std::size_t j = 0; j < m; ++j)
          row[j] += -sub(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) / lambda + log_nu[j] - log_q[j];
        const double norm = log_sum_exp(row, m) - std::log(mu_sub[i]);
        for (std::size_t j = 0; j < m; ++j) row[j] -= norm;
      }
      ++iterations;
      const bool at_checkpoint = (next < std::size(checkpoints) && iterations == checkpoints[next]) ||
                                 iterations == options.max_iterations;
      if (!at_checkpoint) continue;
      if (next < std::size(checkpoints) && iterations == checkpoints[next]) ++next;
      arcs = solver.forest_from_scores(L);
      done = solver.solve(arcs, options.tolerance, repairs, ev);
      if (ev.valid) best_residual = std::min(best_residual, ev.residual);
    }
  }
  if (!done) throw SolverError("oracle unconverged (KKT residual " + std::to_string(best_residual) + ")", best_residual);

  SoftSolution sol;
  sol.lambda = lambda;
  sol.epsilon = options.epsilon;
  sol.eta = 0.0;
  sol.method = "exact-soft";
  sol.iterations = iterations;
  sol.residual = ev.residual;
  std::vector<PlanEntry> entries;
  for (std::size_t k = 0; k < arcs.size(); ++k)
    if (ev.flow[k] > 0.0) entries.push_back({static_cast<std::size_t>(rows[arcs[k].row]), arcs[k].col, ev.flow[k]});
  sol.plan = make_coupling(source, target, std::move(entries));
  sol.phi = Vec::Zero(mu.size());
  for (std::size_t k = 0; k < n; ++k) sol.phi[rows[k]] = -ev.a[k];
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (mu[i] > 0.0) continue;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) best = std::min(best, cost(i, static_cast<Eigen::Index>(j)) - ev.b[j]);
    sol.phi[i] = -best;
  }
  finish_solution(sol, cost);
  // Tree flows carry absolute rounding noise; the ratio is known in closed form.
  for (std::size_t j = 0; j < m; ++j) sol.log_g[static_cast<Eigen::Index>(j)] = ev.log_q[j] - log_nu[j];
  sol.g = sol.log_g.unaryExpr([](double x) { return std::exp(x); });
  // nu_j (g log g - g + 1) is termwise nonnegative and cancellation-free near g = 1.
  double kl = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double l = sol.log_g[static_cast<Eigen::Index>(j)];
    kl += nu[static_cast<Eigen::Index>(j)] * (l == kNegInf ? 1.0 : l * std::exp(l) - std::expm1(l));
  }
  sol.kl = std::max(kl, 0.0);
  sol.objective = lambda * sol.kl + sol.transport;
  return sol;
}

// ------------------------------------------------------------ diagnostics

namespace {

// Visits (i, j, mass) for entries above the per-row relative threshold.
template <typename Fn>
void for_supported(const Coupling& plan, double relative_threshold, Fn&& fn) {
  Vec row_max = Vec::Zero(static_cast<Eigen::Index>(plan.rows()));
  for (const auto& e : plan.entries) {
    auto& r = row_max[static_cast<Eigen::Index>(e.row)];
    r = std::max(r, e.mass);
  }
  for (const auto& e : plan.entries) {
    if (e.mass > 0.0 && e.mass >= relative_threshold * row_max[static_cast<Eigen::Index>(e.row)]) fn(e);
  }
}

}  // namespace

double el_residual(const SoftSolution& solution, const DiscreteMeasure& target, const Mat& cost,
                   double relative_threshold) {
  const Coupling& plan = solution.plan;
  if (target.size() != plan.cols()) throw_invalid("support mismatch");
  if (solution.log_g.size() != static_cast<Eigen::Index>(plan.cols())) throw_invalid("support mismatch");
  Vec lo = Vec::Constant(static_cast<Eigen::Index>(plan.rows()), std::numeric_limits<double>::infinity());
  Vec hi = Vec::Constant(static_cast<Eigen::Index>(plan.rows()), -std::numeric_limits<double>::infinity());
  for_supported(plan, relative_threshold, [&](const PlanEntry& e) {
    const auto i = static_cast<Eigen::Index>(e.row), j = static_cast<Eigen::Index>(e.col);
    if (!std::isfinite(solution.log_g[j])) throw_domain("support inconsistency");
    const double r = solution.lambda * solution.log_g[j] + cost(i, j);
    lo[i] = std::min(lo[i], r);
    hi[i] = std::max(hi[i], r);
  });
  double worst = 0.0;
  for (Eigen::Index i = 0; i < lo.size(); ++i)
    if (hi[i] >= lo[i]) worst = std::max(worst, hi[i] - lo[i]);
  return worst;
}

PerturbedTargetCheck perturbed_target_formula(const SoftSolution& solution, const DiscreteMeasure& target,
                                              const Mat& cost, double relative_threshold) {
  const Coupling& plan = solution.plan;
  if (target.size() != plan.cols()) throw_invalid("support mismatch");
  const auto m = static_cast<Eigen::Index>(plan.cols());
  const Vec q = plan.col_sums();
  Vec lo = Vec::Constant(m, std::numeric_limits<double>::infinity());
  Vec hi = Vec::Constant(m, -std::numeric_limits<double>::infinity());
  Vec carrier = Vec::Zero(m);
  PerturbedTargetCheck out;
  out.predicted = Vec::Constant(m, std::numeric_limits<double>::quiet_NaN());
  for_supported(plan, relative_threshold, [&](const PlanEntry& e) {
    const auto i = static_cast<Eigen::Index>(e.row), j = static_cast<Eigen::Index>(e.col);
    const double log_pred = -cost(i, j) / solution.lambda + std::log(target.weights()[j]) - solution.log_D[i];
    lo[j] = std::min(lo[j], log_pred);
    hi[j] = std::max(hi[j], log_pred);
    if (e.mass > carrier[j]) {
      carrier[j] = e.mass;
      out.predicted[j] = std::exp(log_pred);
    }
  });
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!(hi[j] >= lo[j])) continue;
    out.max_disagreement = std::max(out.max_disagreement, -std::expm1(lo[j] - hi[j]));
    if (q[j] > 0.0) out.max_error = std::max(out.max_error, std::abs(out.predicted[j] - q[j]) / q[j]);
  }
  return out;
}

double resolve_consistency(const SoftSolution& solution, const Mat& cost) {
  const Coupling& plan = solution.plan;
  TransportResult hard = solve_transport(plan.row_sums(), plan.col_sums(), cost);
  return std::abs(hard.value - plan_cost(plan, cost));
}

}  // namespace krot
