#include "krot/config.hpp"

#include <algorithm>
#include <filesystem>
#include <initializer_list>
#include <set>

#include "io_json.hpp"
#include "krot/error.hpp"
#include "krot/io.hpp"

namespace krot {

using detail::json;

namespace {

constexpr std::pair<Experiment, const char*> kExperiments[] = {
    {Experiment::kSolve, "solve"},         {Experiment::kKr, "kr"},           {Experiment::kSweepHard, "sweep-hard"},
    {Experiment::kSweepSoft, "sweep-soft"}, {Experiment::kDiagram, "diagram"}, {Experiment::kKlDecay, "kl-decay"},
    {Experiment::kDynamic, "dynamic"},     {Experiment::kStability, "stability"}};

constexpr std::pair<SolverKind, const char*> kSolvers[] = {{SolverKind::kExact, "exact"},
                                                           {SolverKind::kSinkhorn, "sinkhorn"},
                                                           {SolverKind::kSoftOracle, "soft-oracle"},
                                                           {SolverKind::kSemiRelaxed, "semi-relaxed"}};

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw_invalid("config: " + (path.empty() ? std::string() : path + ": ") + message);
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      fail(join(path, key), "unknown key");
  }
}

const json& require(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) fail(join(path, key), "missing required key");
  return obj[key];
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

std::size_t as_count(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<long long>() < 0) fail(path, "expected a nonnegative integer");
  return static_cast<std::size_t>(v.get<long long>());
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "expected a boolean");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

// Number or array of numbers; `is_list` reports which.
std::vector<double> as_numbers(const json& v, const std::string& path, bool& is_list) {
  is_list = v.is_array();
  if (!is_list) return {as_number(v, path)};
  if (v.empty()) fail(path, "empty list");
  std::vector<double> out;
  for (std::size_t k = 0; k < v.size(); ++k) out.push_back(as_number(v[k], path + "[" + std::to_string(k) + "]"));
  return out;
}

Vec as_vector(const json& v, const std::string& path) {
  bool list = false;
  const auto xs = as_numbers(v, path, list);
  if (!list) fail(path, "expected an array of numbers");
  return Eigen::Map<const Vec>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

Mat as_matrix(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) fail(path, "expected an array of rows");
  Mat m(static_cast<Eigen::Index>(v.size()), 0);
  for (std::size_t r = 0; r < v.size(); ++r) {
    const Vec row = as_vector(v[r], path + "[" + std::to_string(r) + "]");
    if (r == 0) m.resize(static_cast<Eigen::Index>(v.size()), row.size());
    if (row.size() != m.cols()) fail(path, "ragged rows");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

// Wraps domain errors raised while building objects so they carry the key path.
template <typename Fn>
auto at_path(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw Error(ErrorCode::kIo, "config: " + path + ": " + e.what());
    fail(path, e.what());
  }
}

std::string resolve(const std::string& base, const std::string& file) {
  const std::filesystem::path p(file);
  return p.is_absolute() ? file : (std::filesystem::path(base) / p).string();
}

bool has_csv_suffix(const std::string& path) {
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
}

GaussianMeasure gaussian_from(const json& v, const std::string& path) {
  check_keys(v, path, {"mean", "covariance"});
  Vec mean = as_vector(require(v, path, "mean"), join(path, "mean"));
  Mat cov = as_matrix(require(v, path, "covariance"), join(path, "covariance"));
  return at_path(path, [&] { return GaussianMeasure(mean, cov); });
}

DiscreteMeasure atoms_from(const json& v, const std::string& path, const std::string& base) {
  if (v.is_string()) {
    const std::string file = resolve(base, v.get<std::string>());
    return at_path(path, [&] {
      const std::string text = read_text_file(file);
      return has_csv_suffix(file) ? discrete_measure_from_csv(text) : discrete_measure_from_json(text);
    });
  }
  check_keys(v, path, {"points", "weights"});
  Mat points = as_matrix(require(v, path, "points"), join(path, "points"));
  Vec weights = as_vector(require(v, path, "weights"), join(path, "weights"));
  if (weights.size() != points.rows()) fail(join(path, "weights"), "length differs from the number of points");
  return at_path(path, [&] { return DiscreteMeasure(points, weights); });
}

GridDensity density_from(const json& v, const std::string& path, const std::string& base) {
  const std::string file = resolve(base, as_string(v, path));
  return at_path(path, [&] {
    const std::string text = read_text_file(file);
    return has_csv_suffix(file) ? grid_density_from_csv(text) : grid_density_from_json(text);
  });
}

bool allows_epsilon_list(Experiment e) {
  return e == Experiment::kSweepHard || e == Experiment::kSweepSoft || e == Experiment::kDiagram ||
         e == Experiment::kDynamic || e == Experiment::kStability;
}

bool allows_lambda_list(Experiment e) {
  return e == Experiment::kSweepSoft || e == Experiment::kDiagram || e == Experiment::kKlDecay;
}

bool is_soft_experiment(Experiment e) {
  return e == Experiment::kSweepSoft || e == Experiment::kDiagram || e == Experiment::kKlDecay;
}

void parse_fixture(const json& root, const std::string& base, RunConfig& cfg) {
  const json& fx = require(root, "", "fixture");
  check_keys(fx, "fixture", {"gaussian", "grid", "atoms"});
  std::vector<std::string> present;
  for (const char* k : {"gaussian", "grid", "atoms"})
    if (fx.contains(k)) present.push_back(k);
  if (present.empty()) fail("fixture", "missing fixture source (one of gaussian, grid, atoms)");
  if (present.size() > 1)
    fail("fixture", "conflicting fixture sources 'fixture." + present[0] + "' and 'fixture." + present[1] + "'");
  cfg.fixture_kind = present[0];
  const std::string path = "fixture." + present[0];
  const json& v = fx[present[0]];
  if (present[0] == "gaussian") {
    check_keys(v, path, {"source", "target", "nodes", "radius"});
    const GaussianMeasure gs = gaussian_from(require(v, path, "source"), join(path, "source"));
    const GaussianMeasure gt = gaussian_from(require(v, path, "target"), join(path, "target"));
    cfg.nodes = as_count(require(v, path, "nodes"), join(path, "nodes"));
    if (cfg.nodes < 2) fail(join(path, "nodes"), "at least 2 nodes required");
    if (v.contains("radius")) {
      cfg.radius = as_number(v["radius"], join(path, "radius"));
      if (!(cfg.radius > 0.0)) fail(join(path, "radius"), "must be positive");
    } else {
      cfg.defaults.push_back("fixture.gaussian.radius");
    }
    cfg.fixture = at_path(path, [&] { return gaussian_grid_fixture(gs, gt, cfg.nodes, cfg.radius); });
  } else if (present[0] == "grid") {
    check_keys(v, path, {"source", "target"});
    GridDensity s = density_from(require(v, path, "source"), join(path, "source"), base);
    GridDensity t = density_from(require(v, path, "target"), join(path, "target"), base);
    if (s.dimension() != t.dimension()) fail(path, "source and target dimensions differ");
    cfg.fixture = density_fixture(std::move(s), std::move(t));
  } else {
    check_keys(v, path, {"source", "target"});
    DiscreteMeasure s = atoms_from(require(v, path, "source"), join(path, "source"), base);
    DiscreteMeasure t = atoms_from(require(v, path, "target"), join(path, "target"), base);
    if (s.dimension() != t.dimension()) fail(path, "source and target dimensions differ");
    cfg.fixture = atoms_fixture(std::move(s), std::move(t));
  }
}

void parse_cost(const json& root, Experiment e, RunConfig& cfg) {
  if (root.contains("cost")) {
    check_keys(root["cost"], "cost", {"epsilon"});
    if (root["cost"].contains("epsilon")) {
      cfg.epsilons = as_numbers(root["cost"]["epsilon"], "cost.epsilon", cfg.epsilon_list);
      for (double eps : cfg.epsilons)
        if (!(eps > 0.0 && eps <= 1.0)) fail("cost.epsilon", "values must lie in (0, 1]");
      if (cfg.epsilon_list && !allows_epsilon_list(e)) fail("cost.epsilon", "epsilon list requires a sweep experiment");
      return;
    }
  }
  if (e == Experiment::kKr) return;
  if (!allows_epsilon_list(e)) fail("cost.epsilon", "missing required key");
  cfg.epsilons = e == Experiment::kDynamic ? std::vector<double>{1.0, 1e-1, 1e-2, 1e-4}
                                           : std::vector<double>{1.0, 1e-1, 1e-2, 1e-3, 1e-4};
  cfg.epsilon_list = true;
  cfg.defaults.push_back("cost.epsilon");
}

void parse_solver(const json& root, Experiment e, RunConfig& cfg) {
  const json empty = json::object();
  const json& s = root.contains("solver") ? root["solver"] : empty;
  check_keys(s, "solver", {"kind", "lambda", "eta", "anneal", "tolerance", "max_iterations"});
  if (e == Experiment::kKr) {
    if (!s.empty()) fail("solver", "not used by experiment 'kr'");
    return;
  }
  if (s.contains("kind")) {
    const std::string name = as_string(s["kind"], "solver.kind");
    auto it = std::find_if(std::begin(kSolvers), std::end(kSolvers), [&](const auto& p) { return name == p.second; });
    if (it == std::end(kSolvers)) fail("solver.kind", "unknown solver '" + name + "'");
    cfg.solver = it->first;
    cfg.solver_given = true;
  } else if (e == Experiment::kSolve) {
    fail("solver.kind", "missing required key");
  } else {
    cfg.solver = is_soft_experiment(e) ? SolverKind::kSoftOracle : SolverKind::kExact;
    cfg.defaults.push_back("solver.kind");
  }
  const bool soft = cfg.solver == SolverKind::kSoftOracle || cfg.solver == SolverKind::kSemiRelaxed;
  if (is_soft_experiment(e) && !soft)
    fail("solver.kind", std::string("experiment '") + experiment_name(e) + "' needs soft-oracle or semi-relaxed");
  if (!is_soft_experiment(e) && e != Experiment::kSolve && cfg.solver != SolverKind::kExact)
    fail("solver.kind", std::string("experiment '") + experiment_name(e) + "' uses the exact solver");

  if (s.contains("lambda")) {
    if (!soft) fail("solver.lambda", std::string("not used by solver '") + solver_name(cfg.solver) + "'");
    cfg.lambdas = as_numbers(s["lambda"], "solver.lambda", cfg.lambda_list);
    for (double l : cfg.lambdas)
      if (!(l > 0.0)) fail("solver.lambda", "values must be positive");
    if (cfg.lambda_list && !allows_lambda_list(e)) fail("solver.lambda", "\xce\xbb list requires a sweep experiment");
  } else if (soft) {
    if (!allows_lambda_list(e)) fail("solver.lambda", "missing required key");
    cfg.lambdas = e == Experiment::kKlDecay ? std::vector<double>{1.0, 10.0, 100.0, 1000.0}
                                            : std::vector<double>{1.0, 10.0, 100.0, 1000.0, 1e6};
    cfg.lambda_list = true;
    cfg.defaults.push_back("solver.lambda");
  }

  const bool iterative = cfg.solver != SolverKind::kExact;
  const bool entropic = cfg.solver == SolverKind::kSinkhorn || cfg.solver == SolverKind::kSemiRelaxed;
  for (const char* key : {"tolerance", "max_iterations"}) {
    if (!iterative && s.contains(key)) fail(join("solver", key), "not used by solver 'exact'");
    if (iterative && !s.contains(key)) fail(join("solver", key), "missing required key");
  }
  for (const char* key : {"eta", "anneal"})
    if (!entropic && s.contains(key)) fail(join("solver", key), std::string("not used by solver '") + solver_name(cfg.solver) + "'");
  if (iterative) {
    cfg.tolerance = as_number(s["tolerance"], "solver.tolerance");
    if (!(cfg.tolerance > 0.0)) fail("solver.tolerance", "must be positive");
    cfg.max_iterations = as_count(s["max_iterations"], "solver.max_iterations");
    if (cfg.max_iterations == 0) fail("solver.max_iterations", "must be positive");
  }
  if (entropic) {
    cfg.eta = as_number(require(s, "solver", "eta"), "solver.eta");
    if (!(cfg.eta > 0.0)) fail("solver.eta", "must be positive");
    if (s.contains("anneal")) {
      cfg.anneal = as_bool(s["anneal"], "solver.anneal");
    } else {
      cfg.defaults.push_back("solver.anneal");
    }
  }
}

}  // namespace

const char* experiment_name(Experiment e) {
  for (const auto& [k, name] : kExperiments)
    if (k == e) return name;
  return "?";
}

std::optional<Experiment> parse_experiment(const std::string& name) {
  for (const auto& [k, n] : kExperiments)
    if (name == n) return k;
  return std::nullopt;
}

const char* solver_name(SolverKind k) {
  for (const auto& [s, name] : kSolvers)
    if (s == k) return name;
  return "?";
}

RunConfig parse_config_text(const std::string& text, const std::string& base_dir,
                            std::optional<Experiment> experiment_override) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    fail("", std::string("malformed JSON: ") + e.what());
  }
  check_keys(root, "", {"experiment", "fixture", "cost", "solver", "kr_reference", "stability", "dynamic", "output",
                        "timing", "seed"});
  RunConfig cfg;
  if (root.contains("experiment")) {
    const std::string name = as_string(root["experiment"], "experiment");
    cfg.experiment = parse_experiment(name);
    if (!cfg.experiment) fail("experiment", "unknown experiment '" + name + "'");
    if (experiment_override && *experiment_override != *cfg.experiment)
      fail("experiment", "'" + name + "' conflicts with the requested subcommand '" +
                             experiment_name(*experiment_override) + "'");
  } else if (experiment_override) {
    cfg.experiment = experiment_override;
  } else {
    fail("experiment", "missing required key");
  }
  const Experiment e = *cfg.experiment;

  parse_fixture(root, base_dir, cfg);
  parse_cost(root, e, cfg);
  parse_solver(root, e, cfg);

  if (root.contains("kr_reference")) {
    const std::string r = as_string(root["kr_reference"], "kr_reference");
    if (r == "discrete") {
      cfg.reference = KrReference::kDiscrete;
    } else if (r == "gaussian") {
      if (cfg.fixture_kind != "gaussian") fail("kr_reference", "'gaussian' requires a gaussian fixture");
      cfg.reference = KrReference::kGaussian;
    } else {
      fail("kr_reference", "expected 'discrete' or 'gaussian'");
    }
  } else {
    cfg.defaults.push_back("kr_reference");
  }

  if (root.contains("stability")) {
    if (e != Experiment::kStability) fail("stability", "only used by experiment 'stability'");
    check_keys(root["stability"], "stability", {"bandwidths"});
    bool list = false;
    cfg.bandwidths = as_numbers(require(root["stability"], "stability", "bandwidths"), "stability.bandwidths", list);
    for (double h : cfg.bandwidths)
      if (!(h >= 0.0)) fail("stability.bandwidths", "invalid bandwidth");
  } else if (e == Experiment::kStability) {
    fail("stability.bandwidths", "missing required key");
  }
  if (e == Experiment::kStability && cfg.bandwidths.size() != cfg.epsilons.size())
    fail("stability.bandwidths", "length must match cost.epsilon");

  cfg.times = {0.0, 0.25, 0.5, 0.75, 1.0};
  if (root.contains("dynamic")) {
    if (e != Experiment::kDynamic) fail("dynamic", "only used by experiment 'dynamic'");
    check_keys(root["dynamic"], "dynamic", {"times", "probe"});
    if (root["dynamic"].contains("times")) {
      bool list = false;
      cfg.times = as_numbers(root["dynamic"]["times"], "dynamic.times", list);
      for (double t : cfg.times)
        if (!(t >= 0.0 && t <= 1.0)) fail("dynamic.times", "time outside [0,1]");
      if (!std::is_sorted(cfg.times.begin(), cfg.times.end())) fail("dynamic.times", "times must be increasing");
    } else {
      cfg.defaults.push_back("dynamic.times");
    }
    if (root["dynamic"].contains("probe")) {
      cfg.probe = as_number(root["dynamic"]["probe"], "dynamic.probe");
      if (!(cfg.probe > 0.0)) fail("dynamic.probe", "must be positive");
    }
  } else if (e == Experiment::kDynamic) {
    cfg.defaults.push_back("dynamic.times");
  }

  if (root.contains("output")) {
    check_keys(root["output"], "output", {"dir"});
    if (root["output"].contains("dir")) cfg.output_dir = as_string(root["output"]["dir"], "output.dir");
  }
  if (root.contains("timing")) cfg.timing = as_bool(root["timing"], "timing");
  if (root.contains("seed")) cfg.seed = as_count(root["seed"], "seed");
  return cfg;
}

RunConfig parse_config(const std::string& path, std::optional<Experiment> experiment_override) {
  const std::string text = read_text_file(path);
  const std::string base = std::filesystem::path(path).parent_path().string();
  return parse_config_text(text, base.empty() ? "." : base, experiment_override);
}

ExperimentOptions experiment_options(const RunConfig& config, std::size_t threads) {
  ExperimentOptions o;
  o.reference = config.reference;
  o.soft_method = config.solver == SolverKind::kSemiRelaxed ? SoftMethod::kSinkhorn : SoftMethod::kOracle;
  if (config.solver == SolverKind::kSoftOracle) {
    o.oracle.tolerance = config.tolerance;
    o.oracle.max_iterations = config.max_iterations;
  }
  if (config.solver == SolverKind::kSemiRelaxed || config.solver == SolverKind::kSinkhorn) {
    o.sinkhorn.eta = config.eta;
    o.sinkhorn.tolerance = config.tolerance;
    o.sinkhorn.max_iterations = config.max_iterations;
    o.sinkhorn.anneal = config.anneal;
  }
  o.threads = std::max<std::size_t>(1, threads);
  o.timing = config.timing;
  return o;
}

}  // namespace krot
