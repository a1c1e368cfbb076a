#pragma once

// JSON and CSV encodings of measures, plans, maps and reports.
//
// JSON grid densities: {"axes": [[...], ...], "values": [...]} with values in
// row-major node order (last axis fastest). JSON atoms: {"points": [[...]],
// "weights": [...]}. CSV files carry one row per node/atom: coordinates then
// value. Non-finite numbers are written as null in JSON and as inf in CSV.

#include <string>
#include <vector>

#include "krot/dynamic.hpp"
#include "krot/experiments.hpp"
#include "krot/kr.hpp"
#include "krot/ot_soft.hpp"

namespace krot {

std::string read_text_file(const std::string& path);
/// Writes atomically enough for our purposes: truncate, write, flush, check.
void write_text_file(const std::string& path, const std::string& content);

/// Shortest round-trip decimal form of a double ("inf", "-inf", "nan" for non-finite values).
std::string format_number(double v);

std::string grid_density_to_json(const GridDensity& density);
GridDensity grid_density_from_json(const std::string& text);
std::string grid_density_to_csv(const GridDensity& density);
/// Axes are recovered from the distinct coordinates; every node must appear once.
GridDensity grid_density_from_csv(const std::string& text);

std::string discrete_measure_to_json(const DiscreteMeasure& measure);
DiscreteMeasure discrete_measure_from_json(const std::string& text);
std::string discrete_measure_to_csv(const DiscreteMeasure& measure);
DiscreteMeasure discrete_measure_from_csv(const std::string& text);

/// Header row,col,mass.
std::string coupling_to_csv(const Coupling& plan);
std::string coupling_to_json(const Coupling& plan, const Vec* source_potential = nullptr,
                             const Vec* target_potential = nullptr);
std::string potentials_to_csv(const Vec& source_potential, const Vec& target_potential);

std::string soft_solution_to_json(const SoftSolution& solution);
std::string triangular_map_to_json(const TriangularMap& map);
std::string affine_map_to_json(const AffineMap& map);
std::string map_table_to_csv(const MapTable& map);

/// Header time,particle,x1..xd,v1..vd (plus a leading epsilon column when given).
std::string ensemble_to_csv(const ParticleEnsemble& ensemble, const double* epsilon = nullptr,
                            bool header = true);
std::string matrix_to_csv(const Mat& m);

std::string sweep_report_to_json(const SweepReport& report);
std::string sweep_report_to_csv(const SweepReport& report);
std::string kl_decay_to_csv(const std::vector<KlDecayRow>& rows);

}  // namespace krot
