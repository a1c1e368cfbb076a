#pragma once

// JSON values shared by io.cpp and run.cpp (not installed).

#include <cmath>

#include <json.hpp>

#include "krot/io.hpp"

namespace krot::detail {

using json = nlohmann::ordered_json;

inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json numbers(const Vec& v);
json numbers(const std::vector<double>& v);
json matrix_rows(const Mat& m);

json to_json(const DiscreteMeasure& measure);
json to_json(const Coupling& plan);
json to_json(const SoftSolution& solution);
json to_json(const AffineMap& map);
json to_json(const TriangularMap& map);
json to_json(const SweepCell& cell);
json to_json(const SweepReport& report);

}  // namespace krot::detail
