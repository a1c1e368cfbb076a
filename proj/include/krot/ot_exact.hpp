#pragma once

// Exact discrete Kantorovich solver (transportation network simplex) and the
// plan/map utilities built on top of it.

#include <cstddef>
#include <vector>

#include "krot/measures.hpp"

namespace krot {

struct PlanEntry {
  std::size_t row;
  std::size_t col;
  double mass;
};

/// Sparse transport plan between a source measure and a target support.
/// Entries are sorted by (row, col) and strictly positive.
struct Coupling {
  DiscreteMeasure source;
  DiscreteMeasure target;  // reference target; its weights need not equal the column sums
  std::vector<PlanEntry> entries;

  std::size_t rows() const { return source.size(); }
  std::size_t cols() const { return target.size(); }
  Vec row_sums() const;
  Vec col_sums() const;
  double total_mass() const;
  Mat dense() const;
};

/// Builds a Coupling from raw entries: drops non-positive masses, merges
/// duplicates and sorts.
Coupling make_coupling(DiscreteMeasure source, DiscreteMeasure target, std::vector<PlanEntry> entries);

struct TransportResult {
  std::vector<PlanEntry> entries;
  double value = 0.0;
  Vec source_potential;  // u_i
  Vec target_potential;  // v_j, with u_i + v_j <= C_ij and equality on the plan
  std::size_t pivots = 0;
};

/// Largest accepted instance side for the exact solver.
inline constexpr std::size_t kMaxExactAtoms = 4096;

/// Solves min <C, P> over P >= 0 with row sums a and column sums b.
/// Both weight vectors must carry the same total mass.
TransportResult solve_transport(const Vec& a, const Vec& b, const Mat& cost);

struct ExactSolution {
  Coupling plan;
  double value = 0.0;
  Vec source_potential;
  Vec target_potential;
  std::size_t pivots = 0;
};

ExactSolution solve_exact(const DiscreteMeasure& source, const DiscreteMeasure& target, const Mat& cost);

/// max over (i,j) of the dual-feasibility violation and, on the plan support,
/// the slackness |C_ij - u_i - v_j|; relative to max(1, max|C|).
double slackness_residual(const ExactSolution& solution, const Mat& cost);

/// One image point per source atom (rows), as produced by barycentric_map.
using MapTable = Mat;

/// T(x_i) = sum_j P_ij y_j / mu_i.
MapTable barycentric_map(const Coupling& plan);

/// (id, T)_# source as a coupling whose target support is the set of distinct images.
Coupling map_plan(const DiscreteMeasure& source, const MapTable& images);

std::pair<DiscreteMeasure, DiscreteMeasure> plan_marginals(const Coupling& plan);

double plan_cost(const Coupling& plan, const Mat& cost);

/// L2(source) distance between two map tables.
double map_distance_l2(const MapTable& a, const MapTable& b, const DiscreteMeasure& source);

}  // namespace krot
