#pragma once

// Sweeps and limit experiments over (epsilon, lambda) grids.

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "krot/kr.hpp"
#include "krot/ot_soft.hpp"

namespace krot {

inline constexpr int kReportSchemaVersion = 1;

/// Source/target pair plus whatever closed forms and grids it came from.
struct Fixture {
  std::string name;
  DiscreteMeasure source;
  DiscreteMeasure target;
  std::optional<GaussianMeasure> source_gaussian;
  std::optional<GaussianMeasure> target_gaussian;
  std::optional<GridDensity> source_density;
  std::optional<GridDensity> target_density;
};

/// Gaussians discretized on `nodes`^d grids spanning mean +- radius sd per axis.
Fixture gaussian_grid_fixture(const GaussianMeasure& source, const GaussianMeasure& target, std::size_t nodes,
                              double radius = 5.0);
/// N(0, I_2) -> N(0, [[2, 1], [1, 2]]).
Fixture gaussian_reference_fixture(std::size_t nodes);
/// 1/2 d_0 + 1/2 d_1 -> 1/2 d_2 + 1/2 d_3 on the line.
Fixture two_atom_fixture();
Fixture density_fixture(GridDensity source, GridDensity target);
Fixture atoms_fixture(DiscreteMeasure source, DiscreteMeasure target);

enum class KrReference { kDiscrete, kGaussian };
enum class SoftMethod { kOracle, kSinkhorn };

struct ExperimentOptions {
  KrReference reference = KrReference::kDiscrete;
  SoftMethod soft_method = SoftMethod::kOracle;
  OracleOptions oracle;      // lambda overwritten per cell
  SinkhornOptions sinkhorn;  // lambda overwritten per cell
  std::size_t threads = 1;
  bool timing = false;              // record wall-clock seconds per cell
  double far_from_target_tv = 0.25;  // TV(nu_{eps,lambda}, nu) flagging the free-target regime
};

struct SweepCell {
  double epsilon = 0.0;
  double lambda = std::numeric_limits<double>::infinity();  // +inf: hard constraint
  double objective = 0.0;
  double kl = 0.0;
  double transport = 0.0;
  double map_distance = 0.0;
  double el_residual = 0.0;
  double resolve_gap = 0.0;
  std::vector<double> marginal_agreement;  // prefix lengths 1..d
  double target_tv = 0.0;
  bool far_from_target = false;
  double seconds = 0.0;
  std::string solver;
  std::size_t iterations = 0;
  double solver_residual = 0.0;
};

struct SweepReport {
  int schema_version = kReportSchemaVersion;
  std::string experiment;
  std::string instance;
  std::size_t source_atoms = 0;
  std::size_t target_atoms = 0;
  std::size_t dimension = 0;
  std::vector<double> epsilons;
  std::vector<double> lambdas;
  std::vector<SweepCell> cells;  // epsilon-major, lambda-minor
  std::vector<double> bandwidths;
  std::vector<std::string> notes;
};

/// Barycentric map of the KR plan (discrete) or the Gaussian KR map at the source atoms.
MapTable reference_kr_map(const Fixture& fixture, KrReference reference);

SweepReport sweep_hard_epsilon(const Fixture& fixture, const std::vector<double>& epsilons,
                               const ExperimentOptions& options = {});

SweepReport sweep_soft(const Fixture& fixture, const std::vector<double>& epsilons, const std::vector<double>& lambdas,
                       const ExperimentOptions& options = {});

struct DiagramResult {
  double epsilon = 0.0;
  double lambda = 0.0;
  /// A: soft solve at (eps, lambda); B: lambda -> inf first; C: eps -> 0 first; D: KR map mu -> nu.
  MapTable corners[4];
  std::string corner_sources[4];
  Mat distances;  // 4 x 4, L2(mu)
  SoftSolution soft;
};

/// Corners at the smallest epsilon and the largest lambda. With Gaussian
/// closed forms on the fixture, B and D use them.
DiagramResult commutative_diagram(const Fixture& fixture, const std::vector<double>& epsilons,
                                  const std::vector<double>& lambdas, const ExperimentOptions& options = {});

struct KlDecayRow {
  double lambda = 0.0;
  double kl = 0.0;
  double bound = 0.0;  // 2M / lambda
};

std::vector<KlDecayRow> kl_decay_curve(const Fixture& fixture, double epsilon, const std::vector<double>& lambdas,
                                       const ExperimentOptions& options = {});

/// Hard optimal value minus the exact soft objective.
double soft_hard_gap(const DiscreteMeasure& source, const DiscreteMeasure& target, const Mat& cost, double lambda);

/// W2 distance between the (x_{1:k}, y_{1:k}) projections of two plans.
double marginal_agreement(const Coupling& a, const Coupling& b, std::size_t prefix);

/// Pairs bandwidths[i] with epsilons[i]; bandwidth 0 means no mollification.
SweepReport stability_experiment(const Fixture& fixture, const std::vector<double>& bandwidths,
                                 const std::vector<double>& epsilons, const ExperimentOptions& options = {});

}  // namespace krot
