#include "krot/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <sstream>
#include <thread>

#include "krot/cost.hpp"
#include "krot/error.hpp"

namespace krot {

namespace {

// Runs fn(0..n-1) on up to `threads` workers. Results are written by index, so
// assembly order never depends on scheduling. The lowest-index failure wins.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string format_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

[[noreturn]] void rethrow_in_cell(double epsilon, double lambda) {
  const std::string where = "cell (epsilon=" + format_double(epsilon) + ", lambda=" + format_double(lambda) + "): ";
  try {
    throw;
  } catch (const SolverError& e) {
    throw SolverError(where + e.what(), e.last_violation());
  } catch (const Error& e) {
    throw Error(e.code(), where + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kInternal, where + e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Mat weighted_cost_matrix(double epsilon, const DiscreteMeasure& a, const DiscreteMeasure& b) {
  return cost_matrix(WeightedCost(epsilon, a.dimension()), a.points(), b.points());
}

SoftSolution soft_solve(const DiscreteMeasure& source, const DiscreteMeasure& target, const Mat& cost, double epsilon,
                        double lambda, const ExperimentOptions& options) {
  if (options.soft_method == SoftMethod::kOracle) {
    OracleOptions o = options.oracle;
    o.lambda = lambda;
    o.epsilon = epsilon;
    return exact_soft_oracle(source, target, cost, o);
  }
  SinkhornOptions s = options.sinkhorn;
  s.lambda = lambda;
  s.epsilon = epsilon;
  return semi_relaxed_sinkhorn(source, target, cost, s);
}

double soft_el_threshold(const ExperimentOptions& options) {
  return options.soft_method == SoftMethod::kOracle ? 0.0 : 1e-3;
}

std::vector<double> prefix_agreements(const Coupling& a, const Coupling& b) {
  std::vector<double> out;
  for (std::size_t k = 1; k <= a.source.dimension(); ++k) out.push_back(marginal_agreement(a, b, k));
  return out;
}

void describe(SweepReport& report, const Fixture& fixture, std::string experiment) {
  report.experiment = std::move(experiment);
  report.instance = fixture.name;
  report.source_atoms = fixture.source.size();
  report.target_atoms = fixture.target.size();
  report.dimension = fixture.source.dimension();
}

void check_positive(const std::vector<double>& values, const char* what) {
  if (values.empty()) throw_invalid(std::string(what) + " list is empty");
  for (double v : values)
    if (!(v > 0.0)) throw_invalid(std::string(what) + " values must be positive");
}

GridSpec covering_grid(const DiscreteMeasure& m, double pad) {
  const std::size_t d = m.dimension();
  const std::size_t nodes = d == 1 ? 128 : d == 2 ? 32 : 12;
  std::vector<double> lo(d), hi(d);
  for (std::size_t a = 0; a < d; ++a) {
    lo[a] = m.points().col(static_cast<Eigen::Index>(a)).minCoeff() - pad;
    hi[a] = m.points().col(static_cast<Eigen::Index>(a)).maxCoeff() + pad;
  }
  return GridSpec::uniform(lo, hi, nodes);
}

// Index of the positive-weight atom of `m` nearest to `x` (exact matches first).
std::size_t nearest_atom(const DiscreteMeasure& m, const Vec& x) {
  std::size_t best = m.size();
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!(m.weight(i) > 0.0)) continue;
    const double dist = (m.point(i) - x).squaredNorm();
    if (dist < best_d) {
      best_d = dist;
      best = i;
    }
  }
  return best;
}

}  // namespace

// ------------------------------------------------------------- fixtures

Fixture gaussian_grid_fixture(const GaussianMeasure& source, const GaussianMeasure& target, std::size_t nodes,
                              double radius) {
  if (source.dimension() != target.dimension()) throw_invalid("dimension mismatch");
  if (nodes < 2) throw_invalid("at least 2 nodes per axis required");
  if (!(radius > 0.0)) throw_invalid("radius must be positive");
  auto grid_for = [&](const GaussianMeasure& g) {
    std::vector<double> lo(g.dimension()), hi(g.dimension());
    for (std::size_t a = 0; a < g.dimension(); ++a) {
      const auto k = static_cast<Eigen::Index>(a);
      const double sd = std::sqrt(g.covariance()(k, k));
      lo[a] = g.mean()[k] - radius * sd;
      hi[a] = g.mean()[k] + radius * sd;
    }
    return GridSpec::uniform(lo, hi, nodes);
  };
  Fixture f;
  std::ostringstream name;
  name << "gaussian-" << source.dimension() << "d-" << nodes;
  f.name = name.str();
  f.source_gaussian = source;
  f.target_gaussian = target;
  f.source_density = discretize(source, grid_for(source));
  f.target_density = discretize(target, grid_for(target));
  f.source = atomize(*f.source_density);
  f.target = atomize(*f.target_density);
  return f;
}

Fixture gaussian_reference_fixture(std::size_t nodes) {
  Mat cov(2, 2);
  cov << 2.0, 1.0, 1.0, 2.0;
  return gaussian_grid_fixture(GaussianMeasure(Vec::Zero(2), Mat::Identity(2, 2)), GaussianMeasure(Vec::Zero(2), cov),
                               nodes);
}

Fixture two_atom_fixture() {
  Mat xs(2, 1), ys(2, 1);
  xs << 0.0, 1.0;
  ys << 2.0, 3.0;
  Fixture f = atoms_fixture(DiscreteMeasure(xs, Vec::Constant(2, 0.5)), DiscreteMeasure(ys, Vec::Constant(2, 0.5)));
  f.name = "two-atom";
  return f;
}

Fixture density_fixture(GridDensity source, GridDensity target) {
  Fixture f;
  f.name = "grid-density";
  f.source = atomize(source);
  f.target = atomize(target);
  f.source_density = std::move(source);
  f.target_density = std::move(target);
  return f;
}

Fixture atoms_fixture(DiscreteMeasure source, DiscreteMeasure target) {
  if (source.dimension() != target.dimension()) throw_invalid("dimension mismatch");
  Fixture f;
  f.name = "atoms";
  f.source = std::move(source);
  f.target = std::move(target);
  return f;
}

MapTable reference_kr_map(const Fixture& fixture, KrReference reference) {
  if (reference == KrReference::kGaussian) {
    if (!fixture.source_gaussian || !fixture.target_gaussian)
      throw_invalid("gaussian KR reference requires a gaussian fixture");
    return kr_map_gaussian(*fixture.source_gaussian, *fixture.target_gaussian).apply_rows(fixture.source.points());
  }
  return barycentric_map(kr_plan_discrete(fixture.source, fixture.target));
}

// --------------------------------------------------------------- sweeps

SweepReport sweep_hard_epsilon(const Fixture& fixture, const std::vector<double>& epsilons,
                               const ExperimentOptions& options) {
  check_positive(epsilons, "epsilon");
  SweepReport report;
  describe(report, fixture, "sweep-hard");
  report.epsilons = epsilons;
  report.lambdas = {std::numeric_limits<double>::infinity()};
  const MapTable kr = reference_kr_map(fixture, options.reference);
  const Coupling kr_plan = kr_plan_discrete(fixture.source, fixture.target);
  report.cells.resize(epsilons.size());
  parallel_for(epsilons.size(), options.threads, [&](std::size_t k) {
    const double eps = epsilons[k];
    try {
      const auto start = std::chrono::steady_clock::now();
      const Mat C = weighted_cost_matrix(eps, fixture.source, fixture.target);
      const ExactSolution sol = solve_exact(fixture.source, fixture.target, C);
      SweepCell& cell = report.cells[k];
      cell.epsilon = eps;
      cell.objective = sol.value;
      cell.transport = sol.value;
      cell.map_distance = map_distance_l2(barycentric_map(sol.plan), kr, fixture.source);
      cell.marginal_agreement = prefix_agreements(sol.plan, kr_plan);
      cell.solver = "exact";
      cell.iterations = sol.pivots;
      cell.solver_residual = slackness_residual(sol, C);
      if (options.timing) cell.seconds = seconds_since(start);
    } catch (...) {
      rethrow_in_cell(eps, std::numeric_limits<double>::infinity());
    }
  });
  return report;
}

SweepReport sweep_soft(const Fixture& fixture, const std::vector<double>& epsilons, const std::vector<double>& lambdas,
                       const ExperimentOptions& options) {
  check_positive(epsilons, "epsilon");
  check_positive(lambdas, "lambda");
  SweepReport report;
  describe(report, fixture, "sweep-soft");
  report.epsilons = epsilons;
  report.lambdas = lambdas;
  const std::size_t nl = lambdas.size();
  report.cells.resize(epsilons.size() * nl);
  parallel_for(report.cells.size(), options.threads, [&](std::size_t k) {
    const double eps = epsilons[k / nl], lam = lambdas[k % nl];
    try {
      const auto start = std::chrono::steady_clock::now();
      const Mat C = weighted_cost_matrix(eps, fixture.source, fixture.target);
      const SoftSolution sol = soft_solve(fixture.source, fixture.target, C, eps, lam, options);
      const DiscreteMeasure perturbed = sol.perturbed_target();
      const Coupling kr_plan = kr_plan_discrete(fixture.source, perturbed);
      SweepCell& cell = report.cells[k];
      cell.epsilon = eps;
      cell.lambda = lam;
      cell.objective = sol.objective;
      cell.kl = sol.kl;
      cell.transport = sol.transport;
      cell.map_distance = map_distance_l2(barycentric_map(sol.plan), barycentric_map(kr_plan), fixture.source);
      cell.el_residual = el_residual(sol, fixture.target, C, soft_el_threshold(options));
      cell.resolve_gap = resolve_consistency(sol, C);
      cell.marginal_agreement = prefix_agreements(sol.plan, kr_plan);
      cell.target_tv = 0.5 * (perturbed.weights() - fixture.target.weights()).lpNorm<1>();
      cell.far_from_target = cell.target_tv >= options.far_from_target_tv;
      cell.solver = sol.method;
      cell.iterations = sol.iterations;
      cell.solver_residual = sol.residual;
      if (options.timing) cell.seconds = seconds_since(start);
    } catch (...) {
      rethrow_in_cell(eps, lam);
    }
  });
  for (const auto& cell : report.cells)
    if (cell.far_from_target)
      report.notes.push_back("far-from-target regime at epsilon=" + format_double(cell.epsilon) +
                             ", lambda=" + format_double(cell.lambda));
  return report;
}

DiagramResult commutative_diagram(const Fixture& fixture, const std::vector<double>& epsilons,
                                  const std::vector<double>& lambdas, const ExperimentOptions& options) {
  check_positive(epsilons, "epsilon");
  check_positive(lambdas, "lambda");
  DiagramResult out;
  out.epsilon = *std::min_element(epsilons.begin(), epsilons.end());
  out.lambda = *std::max_element(lambdas.begin(), lambdas.end());
  const DiscreteMeasure& mu = fixture.source;
  const Mat C = weighted_cost_matrix(out.epsilon, mu, fixture.target);
  const bool closed_form = options.reference == KrReference::kGaussian;
  if (closed_form && (!fixture.source_gaussian || !fixture.target_gaussian))
    throw_invalid("gaussian KR reference requires a gaussian fixture");

  try {
    out.soft = soft_solve(mu, fixture.target, C, out.epsilon, out.lambda, options);
  } catch (...) {
    rethrow_in_cell(out.epsilon, out.lambda);
  }
  out.corners[0] = barycentric_map(out.soft.plan);
  out.corner_sources[0] = out.soft.method;

  if (closed_form) {
    out.corners[1] = brenier_gaussian_weighted(*fixture.source_gaussian, *fixture.target_gaussian,
                                               WeightedCost(out.epsilon, mu.dimension()))
                         .apply_rows(mu.points());
    out.corner_sources[1] = "gaussian-brenier";
  } else {
    out.corners[1] = barycentric_map(solve_exact(mu, fixture.target, C).plan);
    out.corner_sources[1] = "exact";
  }
  out.corners[2] = barycentric_map(kr_plan_discrete(mu, out.soft.perturbed_target()));
  out.corner_sources[2] = "kr-discrete-perturbed";
  out.corners[3] = reference_kr_map(fixture, options.reference);
  out.corner_sources[3] = closed_form ? "kr-gaussian" : "kr-discrete";

  out.distances = Mat::Zero(4, 4);
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b)
      out.distances(a, b) = out.distances(b, a) = map_distance_l2(out.corners[a], out.corners[b], mu);
  return out;
}

std::vector<KlDecayRow> kl_decay_curve(const Fixture& fixture, double epsilon, const std::vector<double>& lambdas,
                                       const ExperimentOptions& options) {
  check_positive(lambdas, "lambda");
  const double M = second_moment(fixture.source) + second_moment(fixture.target);
  const Mat C = weighted_cost_matrix(epsilon, fixture.source, fixture.target);
  std::vector<KlDecayRow> rows(lambdas.size());
  parallel_for(lambdas.size(), options.threads, [&](std::size_t k) {
    try {
      const SoftSolution sol = soft_solve(fixture.source, fixture.target, C, epsilon, lambdas[k], options);
      rows[k] = {lambdas[k], sol.kl, 2.0 * M / lambdas[k]};
    } catch (...) {
      rethrow_in_cell(epsilon, lambdas[k]);
    }
  });
  return rows;
}

double soft_hard_gap(const DiscreteMeasure& source, const DiscreteMeasure& target, const Mat& cost, double lambda) {
  const double hard = solve_transport(source.weights(), target.weights(), cost).value;
  OracleOptions o;
  o.lambda = lambda;
  return hard - exact_soft_oracle(source, target, cost, o).objective;
}

double marginal_agreement(const Coupling& a, const Coupling& b, std::size_t prefix) {
  const std::size_t d = a.source.dimension();
  if (b.source.dimension() != d || a.target.dimension() != b.target.dimension() || a.target.dimension() != d)
    throw_invalid("support mismatch");
  if (prefix < 1 || prefix > d) throw_invalid("prefix length out of range");
  auto project = [&](const Coupling& p) {
    std::map<std::vector<double>, double> acc;
    std::vector<double> key(2 * prefix);
    for (const auto& e : p.entries) {
      for (std::size_t k = 0; k < prefix; ++k) {
        key[k] = p.source.points()(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(k));
        key[prefix + k] = p.target.points()(static_cast<Eigen::Index>(e.col), static_cast<Eigen::Index>(k));
      }
      acc[key] += e.mass;
    }
    Mat pts(static_cast<Eigen::Index>(acc.size()), static_cast<Eigen::Index>(2 * prefix));
    Vec w(static_cast<Eigen::Index>(acc.size()));
    Eigen::Index r = 0;
    for (const auto& [k, m] : acc) {
      for (std::size_t c = 0; c < k.size(); ++c) pts(r, static_cast<Eigen::Index>(c)) = k[c];
      w[r++] = m;
    }
    return DiscreteMeasure(std::move(pts), std::move(w));
  };
  const DiscreteMeasure pa = project(a), pb = project(b);
  Mat C(static_cast<Eigen::Index>(pa.size()), static_cast<Eigen::Index>(pb.size()));
  for (Eigen::Index i = 0; i < C.rows(); ++i)
    for (Eigen::Index j = 0; j < C.cols(); ++j) C(i, j) = (pa.points().row(i) - pb.points().row(j)).squaredNorm();
  return std::sqrt(std::max(0.0, solve_transport(pa.weights(), pb.weights(), C).value));
}

SweepReport stability_experiment(const Fixture& fixture, const std::vector<double>& bandwidths,
                                 const std::vector<double>& epsilons, const ExperimentOptions& options) {
  check_positive(epsilons, "epsilon");
  if (bandwidths.size() != epsilons.size()) throw_invalid("bandwidth and epsilon lists differ in length");
  for (double h : bandwidths)
    if (!(h >= 0.0)) throw_invalid("invalid bandwidth");
  SweepReport report;
  describe(report, fixture, "stability");
  report.epsilons = epsilons;
  report.lambdas = {std::numeric_limits<double>::infinity()};
  report.bandwidths = bandwidths;
  const MapTable kr = reference_kr_map(fixture, options.reference);
  const double pad = 4.0 * *std::max_element(bandwidths.begin(), bandwidths.end());
  const GridSpec src_grid =
      fixture.source_density ? fixture.source_density->grid() : covering_grid(fixture.source, std::max(pad, 1.0));
  const GridSpec tgt_grid =
      fixture.target_density ? fixture.target_density->grid() : covering_grid(fixture.target, std::max(pad, 1.0));
  report.cells.resize(epsilons.size());
  parallel_for(epsilons.size(), options.threads, [&](std::size_t k) {
    const double eps = epsilons[k], h = bandwidths[k];
    try {
      const auto start = std::chrono::steady_clock::now();
      const DiscreteMeasure mu = h > 0.0 ? atomize(mollify(fixture.source, h, src_grid)) : fixture.source;
      const DiscreteMeasure nu = h > 0.0 ? atomize(mollify(fixture.target, h, tgt_grid)) : fixture.target;
      const Mat C = weighted_cost_matrix(eps, mu, nu);
      const ExactSolution sol = solve_exact(mu, nu, C);
      // Images at the unmollified atoms, read off the nearest charged atom.
      const Mat P = sol.plan.dense();
      MapTable images(static_cast<Eigen::Index>(fixture.source.size()), static_cast<Eigen::Index>(mu.dimension()));
      for (std::size_t i = 0; i < fixture.source.size(); ++i) {
        const std::size_t r = nearest_atom(mu, fixture.source.point(i));
        const auto ri = static_cast<Eigen::Index>(r);
        images.row(static_cast<Eigen::Index>(i)) = P.row(ri) * nu.points() / P.row(ri).sum();
      }
      SweepCell& cell = report.cells[k];
      cell.epsilon = eps;
      cell.objective = sol.value;
      cell.transport = sol.value;
      cell.map_distance = map_distance_l2(images, kr, fixture.source);
      cell.solver = "exact";
      cell.iterations = sol.pivots;
      cell.solver_residual = slackness_residual(sol, C);
      if (options.timing) cell.seconds = seconds_since(start);
    } catch (...) {
      rethrow_in_cell(eps, std::numeric_limits<double>::infinity());
    }
  });
  return report;
}

}  // namespace krot
