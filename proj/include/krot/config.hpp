#pragma once

// Run configuration: strict JSON schema, validated up front.
//
// {
//   "experiment": "solve" | "kr" | "sweep-hard" | "sweep-soft" | "diagram" |
//                 "kl-decay" | "dynamic" | "stability",
//   "fixture": exactly one of
//     {"gaussian": {"source": {"mean": [..], "covariance": [[..]]},
//                   "target": {...}, "nodes": n, "radius": r}}
//     {"grid": {"source": "density.json|csv", "target": "..."}}
//     {"atoms": {"source": "atoms.json|csv" or {"points": [[..]], "weights": [..]},
//                "target": ...}},
//   "cost": {"epsilon": e | [e, ...]},
//   "solver": {"kind": "exact" | "sinkhorn" | "soft-oracle" | "semi-relaxed",
//              "lambda": l | [l, ...], "eta": .., "anneal": bool,
//              "tolerance": .., "max_iterations": n},
//   "kr_reference": "discrete" | "gaussian",
//   "stability": {"bandwidths": [..]},
//   "dynamic": {"times": [..], "probe": r},
//   "output": {"dir": "..."},
//   "timing": bool,
//   "seed": n
// }

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "krot/experiments.hpp"

namespace krot {

enum class Experiment { kSolve, kKr, kSweepHard, kSweepSoft, kDiagram, kKlDecay, kDynamic, kStability };
enum class SolverKind { kExact, kSinkhorn, kSoftOracle, kSemiRelaxed };

const char* experiment_name(Experiment e);
std::optional<Experiment> parse_experiment(const std::string& name);
const char* solver_name(SolverKind k);

struct RunConfig {
  std::optional<Experiment> experiment;  // may come from the command line instead
  Fixture fixture;
  std::string fixture_kind;  // "gaussian" | "grid" | "atoms"
  std::size_t nodes = 0;     // gaussian fixtures
  double radius = 5.0;

  std::vector<double> epsilons;
  bool epsilon_list = false;
  SolverKind solver = SolverKind::kExact;
  bool solver_given = false;
  std::vector<double> lambdas;
  bool lambda_list = false;
  double eta = 0.0;
  bool anneal = false;
  double tolerance = 0.0;
  std::size_t max_iterations = 0;
  KrReference reference = KrReference::kDiscrete;
  std::vector<double> bandwidths;
  std::vector<double> times;
  double probe = 0.0;  // 0: two grid spacings
  std::string output_dir;
  bool timing = false;
  std::uint64_t seed = 0;

  /// Keys filled from defaults, echoed into reports.
  std::vector<std::string> defaults;
};

/// Parses and validates; relative fixture paths resolve against `base_dir`.
/// `experiment_override` (from a CLI subcommand) must agree with the file when both are present.
RunConfig parse_config_text(const std::string& text, const std::string& base_dir = ".",
                            std::optional<Experiment> experiment_override = std::nullopt);
RunConfig parse_config(const std::string& path, std::optional<Experiment> experiment_override = std::nullopt);

/// Solver settings for the experiment layer.
ExperimentOptions experiment_options(const RunConfig& config, std::size_t threads);

}  // namespace krot
