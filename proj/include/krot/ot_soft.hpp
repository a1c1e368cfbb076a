#pragma once

// Semi-relaxed transport: the source marginal is a hard constraint and the
// target marginal is penalized by lambda * KL(second marginal || target).
//
//   min_P  <C, P> + lambda * KL(P^T 1 || nu)   s.t.  P 1 = mu, P >= 0
//
// Two solvers are provided: an entropic scaling iteration (scalable, biased by
// its entropy parameter eta) and an exact active-set solver used as ground
// truth on small and medium instances.

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "krot/ot_exact.hpp"

namespace krot {

struct SoftSolution {
  Coupling plan;  // target is the reference measure nu
  double lambda = 0.0;
  double epsilon = std::numeric_limits<double>::quiet_NaN();  // cost parameter, metadata only
  double eta = 0.0;                                            // 0 for the exact solver
  /// Source potential in the convention lambda*log(g) + C_ij + phi_i = 0 on the plan support.
  Vec phi;
  /// Density ratio of the second marginal w.r.t. nu, per target atom.
  Vec g;
  /// log g, kept separately so that tiny ratios retain full precision.
  Vec log_g;
  /// log D(x_i) = log sum_j exp(-C_ij / lambda) nu_j.
  Vec log_D;
  /// Normalizer of g; potentials are shifted so that it equals one.
  double Z = 1.0;
  double objective = 0.0;
  double kl = 0.0;
  double transport = 0.0;
  std::size_t iterations = 0;
  std::vector<double> eta_trace;
  /// KKT residual (exact solver) or last row-marginal violation before the final projection.
  double residual = 0.0;
  std::string method;

  /// Second marginal as a measure on the target support.
  DiscreteMeasure perturbed_target() const;
};

/// sum q_i log(q_i / ref_i) with 0 log 0 = 0; +inf when q charges a null atom of ref.
double kl_divergence(const Vec& q, const Vec& reference);
double kl_divergence(const DiscreteMeasure& q, const DiscreteMeasure& reference);

enum class LogDomain { kAuto, kAlways, kNever };

struct SinkhornOptions {
  double lambda = 1.0;  // +inf gives the balanced problem
  double eta = 1e-2;
  std::size_t max_iterations = 10000;
  double tolerance = 1e-9;  // on the L1 row-marginal violation
  bool anneal = false;      // geometric eta schedule from median(C)/10 down to eta
  double anneal_factor = 0.5;
  LogDomain log_domain = LogDomain::kAuto;
  double epsilon = std::numeric_limits<double>::quiet_NaN();
};

SoftSolution semi_relaxed_sinkhorn(const DiscreteMeasure& source, const DiscreteMeasure& target, const Mat& cost,
                                   const SinkhornOptions& options);

struct OracleOptions {
  double lambda = 1.0;
  double tolerance = 1e-8;
  std::size_t max_iterations = 20000;  // mirror-descent warm-start budget
  double epsilon = std::numeric_limits<double>::quiet_NaN();
};

/// Largest side accepted by the exact soft solver.
inline constexpr std::size_t kMaxOracleAtoms = kMaxExactAtoms;

/// Exact minimizer certified by its KKT residual (<= tolerance).
SoftSolution exact_soft_oracle(const DiscreteMeasure& source, const DiscreteMeasure& target, const Mat& cost,
                               const OracleOptions& options);

/// Objective lambda*KL(P^T 1 || nu) + <C, P> of an arbitrary plan.
double soft_objective(const Coupling& plan, const Mat& cost, double lambda);

/// Row-wise spread of lambda*log(g_j) + C_ij over the plan support. Entries
/// below `relative_threshold` times their row maximum are ignored.
double el_residual(const SoftSolution& solution, const DiscreteMeasure& target, const Mat& cost,
                   double relative_threshold = 0.0);

struct PerturbedTargetCheck {
  /// Predicted second-marginal mass per target atom (from the row carrying
  /// the most mass into that atom); NaN for atoms with no mass.
  Vec predicted;
  /// max over atoms of (max_i - min_i) / max_i across supporting rows.
  double max_disagreement = 0.0;
  /// max over atoms of |predicted - actual| / actual.
  double max_error = 0.0;
};

/// Evaluates q_j = exp(-C_ij / lambda) nu_j / D(x_i) for every supported (i, j).
PerturbedTargetCheck perturbed_target_formula(const SoftSolution& solution, const DiscreteMeasure& target,
                                              const Mat& cost, double relative_threshold = 0.0);

/// |hard OT value between mu and the second marginal - <C, P>|.
double resolve_consistency(const SoftSolution& solution, const Mat& cost);

}  // namespace krot
