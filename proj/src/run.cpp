#include "krot/run.hpp"

#include <algorithm>
#include <filesystem>
#include <ostream>

#include "io_json.hpp"
#include "krot/dynamic.hpp"
#include "krot/error.hpp"
#include "krot/io.hpp"

namespace krot {

using detail::json;
using detail::number;
using detail::numbers;

namespace {

class Runner {
 public:
  Runner(const RunConfig& cfg, const RunOptions& opts, std::ostream& out, std::filesystem::path dir)
      : cfg_(cfg), opts_(opts), out_(out), dir_(std::move(dir)), options_(experiment_options(cfg, opts.threads)) {}

  json& report() { return report_; }

  void dispatch() {
    switch (*cfg_.experiment) {
      case Experiment::kSolve: solve(); break;
      case Experiment::kKr: kr(); break;
      case Experiment::kSweepHard: sweep(sweep_hard_epsilon(fx(), cfg_.epsilons, options_)); break;
      case Experiment::kSweepSoft: sweep(sweep_soft(fx(), cfg_.epsilons, cfg_.lambdas, options_)); break;
      case Experiment::kDiagram: diagram(); break;
      case Experiment::kKlDecay: kl_decay(); break;
      case Experiment::kDynamic: dynamic(); break;
      case Experiment::kStability: sweep(stability_experiment(fx(), cfg_.bandwidths, cfg_.epsilons, options_)); break;
    }
  }

  void write(const std::string& name, const std::string& content) const {
    write_text_file((dir_ / name).string(), content);
  }

 private:
  const Fixture& fx() const { return cfg_.fixture; }

  void say(const std::string& line) {
    if (!opts_.quiet) out_ << line << '\n';
  }

  static std::string kv(const char* key, double v) { return std::string(key) + "=" + format_number(v); }

  void write_cells(const SweepReport& r) {
    write("cells.csv", sweep_report_to_csv(r));
    report_["cells"] = detail::to_json(r)["cells"];
    if (!r.notes.empty()) report_["notes"] = r.notes;
  }

  SweepReport single_cell_report(SweepCell cell) const {
    SweepReport r;
    r.experiment = experiment_name(*cfg_.experiment);
    r.instance = fx().name;
    r.cells.push_back(std::move(cell));
    return r;
  }

  void sweep(const SweepReport& r) {
    write_cells(r);
    for (std::size_t k = 0; k < r.cells.size(); ++k) {
      const auto& c = r.cells[k];
      std::string line = r.experiment + " " + kv("epsilon", c.epsilon);
      if (std::isfinite(c.lambda)) line += " " + kv("lambda", c.lambda);
      if (!r.bandwidths.empty()) line += " " + kv("bandwidth", r.bandwidths[k]);
      line += " " + kv("objective", c.objective) + " " + kv("distance", c.map_distance);
      if (c.far_from_target) line += " far-from-target";
      say(line);
    }
  }

  void solve() {
    const double eps = cfg_.epsilons.front();
    const Mat C = cost_matrix(WeightedCost(eps, fx().source.dimension()), fx().source.points(), fx().target.points());
    write("cost.csv", matrix_to_csv(C));
    SweepCell cell;
    cell.epsilon = eps;
    cell.solver = solver_name(cfg_.solver);
    if (cfg_.solver == SolverKind::kExact) {
      const ExactSolution sol = solve_exact(fx().source, fx().target, C);
      write("plan.csv", coupling_to_csv(sol.plan));
      write("plan.json", coupling_to_json(sol.plan, &sol.source_potential, &sol.target_potential));
      write("potentials.csv", potentials_to_csv(sol.source_potential, sol.target_potential));
      cell.objective = cell.transport = sol.value;
      cell.iterations = sol.pivots;
      cell.solver_residual = slackness_residual(sol, C);
      fill_map_distance(cell, sol.plan, fx().target);
    } else {
      SoftSolution sol;
      if (cfg_.solver == SolverKind::kSoftOracle) {
        OracleOptions o = options_.oracle;
        o.lambda = cfg_.lambdas.front();
        o.epsilon = eps;
        sol = exact_soft_oracle(fx().source, fx().target, C, o);
      } else {
        SinkhornOptions s = options_.sinkhorn;
        s.lambda = cfg_.solver == SolverKind::kSinkhorn ? std::numeric_limits<double>::infinity() : cfg_.lambdas.front();
        s.epsilon = eps;
        sol = semi_relaxed_sinkhorn(fx().source, fx().target, C, s);
      }
      write("plan.csv", coupling_to_csv(sol.plan));
      write("solution.json", soft_solution_to_json(sol));
      cell.lambda = sol.lambda;
      cell.objective = sol.objective;
      cell.kl = sol.kl;
      cell.transport = sol.transport;
      cell.iterations = sol.iterations;
      cell.solver_residual = sol.residual;
      if (std::isfinite(sol.lambda)) {
        cell.el_residual = el_residual(sol, fx().target, C, cfg_.solver == SolverKind::kSoftOracle ? 0.0 : 1e-3);
        cell.resolve_gap = resolve_consistency(sol, C);
        cell.target_tv = 0.5 * (sol.perturbed_target().weights() - fx().target.weights()).lpNorm<1>();
      }
      fill_map_distance(cell, sol.plan, sol.perturbed_target());
    }
    write_cells(single_cell_report(cell));
    say("solve " + kv("epsilon", eps) + (std::isfinite(cell.lambda) ? " " + kv("lambda", cell.lambda) : "") +
        " solver=" + cell.solver + " " + kv("cost", cell.objective));
  }

  // Distance from the plan's barycentric map to the KR map onto `target`.
  void fill_map_distance(SweepCell& cell, const Coupling& plan, const DiscreteMeasure& target) const {
    const DiscreteMeasure& mu = fx().source;
    if (mu.weights().minCoeff() <= 0.0) return;
    cell.map_distance = map_distance_l2(barycentric_map(plan), barycentric_map(kr_plan_discrete(mu, target)), mu);
  }

  void kr() {
    const Coupling plan = kr_plan_discrete(fx().source, fx().target);
    write("plan.csv", coupling_to_csv(plan));
    json result = {{"plan_entries", plan.entries.size()}};
    if (fx().source.weights().minCoeff() > 0.0) write("map.csv", map_table_to_csv(barycentric_map(plan)));
    if (fx().source_density && fx().target_density) {
      const TriangularMap T = kr_map_grid(*fx().source_density, *fx().target_density);
      write("triangular_map.json", triangular_map_to_json(T));
      result["jacobian_violation"] = kr_jacobian_identity_check(T, *fx().source_density, *fx().target_density);
      result["monotone"] = T.is_monotone();
    }
    if (fx().source_gaussian && fx().target_gaussian) {
      const AffineMap A = kr_map_gaussian(*fx().source_gaussian, *fx().target_gaussian);
      write("gaussian_map.json", affine_map_to_json(A));
      result["gaussian_map"] = detail::to_json(A);
    }
    report_["kr"] = result;
    std::string line = "kr atoms=" + std::to_string(fx().source.size()) + " entries=" + std::to_string(plan.entries.size());
    if (result.contains("jacobian_violation")) line += " " + kv("jacobian_violation", result["jacobian_violation"].get<double>());
    say(line);
  }

  void diagram() {
    const DiagramResult d = commutative_diagram(fx(), cfg_.epsilons, cfg_.lambdas, options_);
    static const char* labels[4] = {"A", "B", "C", "D"};
    std::string corners = "corner,atom";
    for (std::size_t a = 0; a < fx().source.dimension(); ++a) corners += ",y" + std::to_string(a + 1);
    corners += '\n';
    json cj = json::array();
    for (int c = 0; c < 4; ++c) {
      cj.push_back({{"corner", labels[c]}, {"source", d.corner_sources[c]}});
      for (Eigen::Index i = 0; i < d.corners[c].rows(); ++i) {
        corners += std::string(labels[c]) + "," + std::to_string(i);
        for (Eigen::Index a = 0; a < d.corners[c].cols(); ++a) corners += "," + format_number(d.corners[c](i, a));
        corners += '\n';
      }
    }
    write("corners.csv", corners);
    write("distances.csv", "corner,A,B,C,D\n" + [&] {
      std::string s;
      for (int r = 0; r < 4; ++r) {
        s += labels[r];
        for (int c = 0; c < 4; ++c) s += "," + format_number(d.distances(r, c));
        s += '\n';
      }
      return s;
    }());
    report_["diagram"] = {{"epsilon", d.epsilon},      {"lambda", d.lambda},
                          {"corners", cj},             {"distances", detail::matrix_rows(d.distances)},
                          {"soft", {{"objective", d.soft.objective}, {"kl", d.soft.kl}, {"residual", d.soft.residual}}}};
    SweepCell cell;
    cell.epsilon = d.epsilon;
    cell.lambda = d.lambda;
    cell.objective = d.soft.objective;
    cell.kl = d.soft.kl;
    cell.transport = d.soft.transport;
    cell.map_distance = d.distances(0, 3);
    cell.solver = d.soft.method;
    cell.iterations = d.soft.iterations;
    cell.solver_residual = d.soft.residual;
    write_cells(single_cell_report(cell));
    for (int c = 0; c < 3; ++c)
      say(std::string("diagram corner=") + labels[c] + " source=" + d.corner_sources[c] + " " +
          kv("distance_to_D", d.distances(c, 3)));
  }

  void kl_decay() {
    const double eps = cfg_.epsilons.front();
    const auto rows = kl_decay_curve(fx(), eps, cfg_.lambdas, options_);
    write("kl_decay.csv", kl_decay_to_csv(rows));
    json rj = json::array();
    SweepReport r = single_cell_report({});
    r.cells.clear();
    for (const auto& row : rows) {
      rj.push_back({{"lambda", row.lambda}, {"kl", row.kl}, {"bound", row.bound}, {"within_bound", row.kl <= row.bound}});
      SweepCell c;
      c.epsilon = eps;
      c.lambda = row.lambda;
      c.kl = row.kl;
      c.solver = solver_name(cfg_.solver);
      r.cells.push_back(c);
      say("kl-decay " + kv("lambda", row.lambda) + " " + kv("kl", row.kl) + " " + kv("bound", row.bound));
    }
    report_["kl_decay"] = rj;
    write_cells(r);
  }

  void dynamic() {
    const DiscreteMeasure& mu = fx().source;
    const std::size_t d = mu.dimension();
    const MapTable kr = reference_kr_map(fx(), options_.reference);
    SweepReport r = single_cell_report({});
    r.cells.clear();
    json rows = json::array();
    std::string ensembles;
    for (double eps : cfg_.epsilons) {
      const WeightedCost cost(eps, d);
      const Mat C = cost_matrix(cost, mu.points(), fx().target.points());
      const ExactSolution sol = solve_exact(mu, fx().target, C);
      const MapTable T = barycentric_map(sol.plan);
      const ParticleEnsemble e = displacement_interpolate(T, mu, cfg_.times);
      ensembles += ensemble_to_csv(e, &eps, ensembles.empty());
      const double act = action(e, cost);
      const Coupling mp = map_plan(mu, T);
      const double static_cost = plan_cost(mp, cost_matrix(cost, mu.points(), mp.target.points()));
      double gap = 0.0;
      for (double t : cfg_.times)
        if (t > 0.0 && t < 1.0) gap = std::max(gap, xt_optimality_check(mu, e, t, cost));
      json row = {{"epsilon", eps}, {"action", act}, {"plan_cost", static_cost}, {"max_xt_gap", gap}};
      std::string line = "dynamic " + kv("epsilon", eps) + " " + kv("action", act) + " " + kv("max_xt_gap", gap);
      if (fx().source_gaussian && fx().target_gaussian) {
        const double defect = velocity_jacobian_defect(
            brenier_gaussian_weighted(*fx().source_gaussian, *fx().target_gaussian, cost), 0.5);
        row["velocity_defect_closed_form"] = defect;
        line += " " + kv("defect", defect);
      }
      if (fx().source_density && d <= 2) {
        row["velocity_defect_solver"] = number(solver_defect(T));
        row["continuity_residual"] = continuity(e);
      }
      rows.push_back(row);
      SweepCell c;
      c.epsilon = eps;
      c.objective = act;
      c.transport = static_cost;
      c.map_distance = map_distance_l2(T, kr, mu);
      c.solver = "exact";
      c.iterations = sol.pivots;
      c.solver_residual = slackness_residual(sol, C);
      r.cells.push_back(c);
      say(line);
    }
    write("ensemble.csv", ensembles);
    report_["dynamic"] = {{"t", 0.5}, {"times", numbers(cfg_.times)}, {"rows", rows}};
    write_cells(r);
  }

  // Finite-difference velocity defect of the solver map, interpolated over the source grid.
  double solver_defect(const MapTable& T) const {
    const GridDensity& f = *fx().source_density;
    const GridSpec& g = f.grid();
    double spacing = 0.0;
    for (std::size_t a = 0; a < g.dimension(); ++a)
      spacing = std::max(spacing, (g.axis(a).back() - g.axis(a).front()) / static_cast<double>(g.count(a) - 1));
    const double probe = cfg_.probe > 0.0 ? cfg_.probe : 2.0 * spacing;
    PointMap map = [&](const Vec& x) { return interpolate_nodes(g, T, x); };
    const double peak = *std::max_element(f.values().begin(), f.values().end());
    std::vector<Vec> pts;
    for (std::size_t k = 0; k < g.size(); ++k) {
      const Vec x = g.node(k);
      bool inside = f.value(k) >= 1e-2 * peak;
      for (std::size_t a = 0; a < g.dimension() && inside; ++a)
        inside = x[static_cast<Eigen::Index>(a)] - probe >= g.axis(a).front() &&
                 x[static_cast<Eigen::Index>(a)] + probe <= g.axis(a).back();
      if (inside) pts.push_back(x);
    }
    if (pts.empty()) return std::numeric_limits<double>::quiet_NaN();
    Mat P(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(g.dimension()));
    for (std::size_t k = 0; k < pts.size(); ++k) P.row(static_cast<Eigen::Index>(k)) = pts[k].transpose();
    return velocity_jacobian_defect(map, P, 0.5, probe);
  }

  double continuity(const ParticleEnsemble& e) const {
    const GridSpec& src = fx().source_density->grid();
    const std::size_t d = src.dimension();
    std::vector<double> lo(d), hi(d);
    std::size_t nodes = 0;
    for (std::size_t a = 0; a < d; ++a) {
      const auto col = static_cast<Eigen::Index>(a);
      lo[a] = std::min(src.axis(a).front(), fx().target.points().col(col).minCoeff());
      hi[a] = std::max(src.axis(a).back(), fx().target.points().col(col).maxCoeff());
      nodes = std::max(nodes, src.count(a));
    }
    return continuity_residual(e, GridSpec::uniform(lo, hi, nodes));
  }

  static Vec interpolate_nodes(const GridSpec& g, const MapTable& table, const Vec& x) {
    const std::size_t d = g.dimension();
    std::vector<std::size_t> base(d), multi(d);
    std::vector<double> frac(d);
    for (std::size_t a = 0; a < d; ++a) {
      const auto& nodes = g.axis(a);
      const double v = std::clamp(x[static_cast<Eigen::Index>(a)], nodes.front(), nodes.back());
      auto k = static_cast<std::size_t>(std::upper_bound(nodes.begin(), nodes.end(), v) - nodes.begin());
      k = std::min(k, nodes.size() - 1) - 1;
      base[a] = k;
      frac[a] = (v - nodes[k]) / (nodes[k + 1] - nodes[k]);
    }
    Vec y = Vec::Zero(table.cols());
    for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
      double w = 1.0;
      for (std::size_t a = 0; a < d; ++a) {
        const bool up = (corner >> a) & 1U;
        multi[a] = base[a] + (up ? 1 : 0);
        w *= up ? frac[a] : 1.0 - frac[a];
      }
      if (w != 0.0) y += w * table.row(static_cast<Eigen::Index>(g.flat_index(multi))).transpose();
    }
    return y;
  }

  const RunConfig& cfg_;
  const RunOptions& opts_;
  std::ostream& out_;
  std::filesystem::path dir_;
  ExperimentOptions options_;
  json report_;
};

json echo_config(const RunConfig& c) {
  json solver = {{"kind", solver_name(c.solver)}};
  if (c.solver != SolverKind::kExact) {
    solver["tolerance"] = c.tolerance;
    solver["max_iterations"] = c.max_iterations;
  }
  if (c.solver == SolverKind::kSinkhorn || c.solver == SolverKind::kSemiRelaxed) {
    solver["eta"] = c.eta;
    solver["anneal"] = c.anneal;
  }
  json fixture = {{"kind", c.fixture_kind},
                  {"name", c.fixture.name},
                  {"source_atoms", c.fixture.source.size()},
                  {"target_atoms", c.fixture.target.size()},
                  {"dimension", c.fixture.source.dimension()}};
  if (c.fixture_kind == "gaussian") {
    fixture["nodes"] = c.nodes;
    fixture["radius"] = c.radius;
  }
  json out = {{"experiment", experiment_name(*c.experiment)},
              {"fixture", fixture},
              {"epsilons", numbers(c.epsilons)},
              {"lambdas", numbers(c.lambdas)},
              {"solver", solver},
              {"kr_reference", c.reference == KrReference::kGaussian ? "gaussian" : "discrete"},
              {"seed", c.seed},
              {"timing", c.timing},
              {"defaults", c.defaults}};
  if (!c.bandwidths.empty()) out["bandwidths"] = numbers(c.bandwidths);
  if (*c.experiment == Experiment::kDynamic) out["times"] = numbers(c.times);
  return out;
}

}  // namespace

int run(const RunConfig& config, const RunOptions& options, std::ostream& out, std::ostream& err) {
  if (!config.experiment) {
    err << "error: no experiment selected\n";
    return static_cast<int>(ErrorCode::kInvalidArgument);
  }
  const std::string dir = options.output_dir.empty() ? config.output_dir : options.output_dir;
  if (dir.empty()) {
    err << "error: no output directory (use --out or output.dir)\n";
    return static_cast<int>(ErrorCode::kInvalidArgument);
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    err << "error: cannot create output directory '" << dir << "': " << ec.message() << '\n';
    return static_cast<int>(ErrorCode::kIo);
  }
  Runner runner(config, options, out, dir);
  json& report = runner.report();
  report["schema_version"] = kReportSchemaVersion;
  report["experiment"] = experiment_name(*config.experiment);
  report["status"] = "ok";
  report["config"] = echo_config(config);
  int status = 0;
  try {
    runner.dispatch();
  } catch (const Error& e) {
    status = static_cast<int>(e.code());
    report["status"] = "error";
    report["error"] = e.what();
    err << "error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    status = static_cast<int>(ErrorCode::kInternal);
    report["status"] = "error";
    report["error"] = e.what();
    err << "error: " << e.what() << '\n';
  }
  if (!report.contains("cells")) report["cells"] = json::array();
  try {
    runner.write("report.json", report.dump(2) + "\n");
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    if (status == 0) status = static_cast<int>(e.code());
  }
  return status;
}

}  // namespace krot
