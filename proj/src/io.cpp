#include "krot/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "io_json.hpp"
#include "krot/error.hpp"

namespace krot {

using detail::json;

namespace {

[[noreturn]] void throw_io(const std::string& message) { throw Error(ErrorCode::kIo, message); }

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw_io(std::string("malformed JSON: ") + e.what());
  }
}

std::vector<double> read_numbers(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) throw_io(std::string("missing array '") + key + "'");
  std::vector<double> out;
  for (const auto& v : j[key]) {
    if (!v.is_number()) throw_io(std::string("non-numeric entry in '") + key + "'");
    out.push_back(v.get<double>());
  }
  return out;
}

Mat read_rows(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].empty()) throw_io(std::string("missing array '") + key + "'");
  const auto& rows = j[key];
  const std::size_t cols = rows[0].is_array() ? rows[0].size() : 0;
  if (cols == 0) throw_io(std::string("'") + key + "' must hold non-empty rows");
  Mat out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!rows[r].is_array() || rows[r].size() != cols) throw_io(std::string("ragged rows in '") + key + "'");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!rows[r][c].is_number()) throw_io(std::string("non-numeric entry in '") + key + "'");
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<double>();
    }
  }
  return out;
}

std::vector<std::vector<double>> parse_csv(const std::string& text, std::size_t& columns) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<double>> rows;
  columns = 0;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ls, cell, ',')) {
      double v = 0.0;
      const auto* b = cell.data();
      const auto* e = cell.data() + cell.size();
      while (b < e && *b == ' ') ++b;
      auto res = std::from_chars(b, e, v);
      if (res.ec != std::errc() || res.ptr != e) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw_io("non-numeric CSV row: " + line);
    }
    first = false;
    if (columns == 0) columns = row.size();
    if (row.size() != columns) throw_io("ragged CSV row: " + line);
    rows.push_back(std::move(row));
  }
  if (rows.empty() || columns < 2) throw_io("CSV needs at least one row of coordinates and a value");
  return rows;
}

void append_row(std::string& out, const std::vector<std::string>& cells) {
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k) out += ',';
    out += cells[k];
  }
  out += '\n';
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_io("cannot write '" + path + "'");
  out << content;
  out.flush();
  if (!out) throw_io("write failed for '" + path + "'");
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

json numbers(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v[i]));
  return a;
}

json numbers(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

json matrix_rows(const Mat& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(numbers(Vec(m.row(i).transpose())));
  return a;
}

json to_json(const DiscreteMeasure& measure) {
  return {{"points", matrix_rows(measure.points())}, {"weights", numbers(measure.weights())}};
}

json to_json(const Coupling& plan) {
  json rows = json::array(), cols = json::array(), mass = json::array();
  for (const auto& e : plan.entries) {
    rows.push_back(e.row);
    cols.push_back(e.col);
    mass.push_back(e.mass);
  }
  return {{"rows", plan.rows()}, {"cols", plan.cols()}, {"entries", {{"row", rows}, {"col", cols}, {"mass", mass}}}};
}

json to_json(const SoftSolution& s) {
  return {{"method", s.method},
          {"lambda", number(s.lambda)},
          {"epsilon", number(s.epsilon)},
          {"eta", s.eta},
          {"objective", s.objective},
          {"kl", s.kl},
          {"transport", s.transport},
          {"iterations", s.iterations},
          {"residual", s.residual},
          {"eta_trace", numbers(s.eta_trace)},
          {"Z", s.Z},
          {"phi", numbers(s.phi)},
          {"g", numbers(s.g)},
          {"log_D", numbers(s.log_D)},
          {"plan", to_json(s.plan)}};
}

json to_json(const AffineMap& map) { return {{"matrix", matrix_rows(map.A)}, {"offset", numbers(map.b)}}; }

json to_json(const TriangularMap& map) {
  json comps = json::array();
  for (std::size_t i = 0; i < map.dimension(); ++i) {
    json pred = json::array();
    for (std::size_t k = 0; k < i; ++k) pred.push_back(map.grid().axis(k));
    comps.push_back({{"component", i},
                     {"predecessor_axes", pred},
                     {"own_axis", map.grid().axis(i)},
                     {"images", numbers(map.component(i))}});
  }
  return {{"dimension", map.dimension()}, {"components", comps}};
}

json to_json(const SweepCell& c) {
  return {{"epsilon", number(c.epsilon)},
          {"lambda", number(c.lambda)},
          {"objective", number(c.objective)},
          {"kl", number(c.kl)},
          {"transport", number(c.transport)},
          {"map_distance", number(c.map_distance)},
          {"el_residual", number(c.el_residual)},
          {"resolve_gap", number(c.resolve_gap)},
          {"marginal_agreement", numbers(c.marginal_agreement)},
          {"target_tv", number(c.target_tv)},
          {"far_from_target", c.far_from_target},
          {"seconds", c.seconds},
          {"solver", c.solver},
          {"iterations", c.iterations},
          {"solver_residual", number(c.solver_residual)}};
}

json to_json(const SweepReport& r) {
  json cells = json::array();
  for (const auto& c : r.cells) cells.push_back(to_json(c));
  json out = {{"schema_version", r.schema_version},
              {"experiment", r.experiment},
              {"instance", {{"name", r.instance}, {"source_atoms", r.source_atoms}, {"target_atoms", r.target_atoms},
                            {"dimension", r.dimension}}},
              {"epsilons", numbers(r.epsilons)},
              {"lambdas", numbers(r.lambdas)}};
  if (!r.bandwidths.empty()) out["bandwidths"] = numbers(r.bandwidths);
  out["cells"] = cells;
  out["notes"] = r.notes;
  return out;
}

}  // namespace detail

// ------------------------------------------------------------- measures

std::string grid_density_to_json(const GridDensity& density) {
  json axes = json::array();
  for (const auto& a : density.grid().axes()) axes.push_back(a);
  return json{{"axes", axes}, {"values", density.values()}}.dump(2) + "\n";
}

GridDensity grid_density_from_json(const std::string& text) {
  const json j = parse(text);
  if (!j.is_object() || !j.contains("axes") || !j["axes"].is_array()) throw_io("missing array 'axes'");
  std::vector<std::vector<double>> axes;
  for (const auto& a : j["axes"]) {
    if (!a.is_array()) throw_io("each axis must be an array");
    std::vector<double> nodes;
    for (const auto& v : a) {
      if (!v.is_number()) throw_io("non-numeric axis node");
      nodes.push_back(v.get<double>());
    }
    axes.push_back(std::move(nodes));
  }
  GridSpec grid(std::move(axes));
  std::vector<double> values = read_numbers(j, "values");
  if (values.size() != grid.size()) throw_io("value count does not match the grid");
  return build_grid_density(std::move(grid), std::move(values));
}

std::string grid_density_to_csv(const GridDensity& density) {
  const GridSpec& g = density.grid();
  std::string out;
  std::vector<std::string> header;
  for (std::size_t a = 0; a < g.dimension(); ++a) header.push_back("x" + std::to_string(a + 1));
  header.push_back("value");
  append_row(out, header);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec x = g.node(k);
    std::vector<std::string> row;
    for (Eigen::Index a = 0; a < x.size(); ++a) row.push_back(format_number(x[a]));
    row.push_back(format_number(density.value(k)));
    append_row(out, row);
  }
  return out;
}

GridDensity grid_density_from_csv(const std::string& text) {
  std::size_t cols = 0;
  const auto rows = parse_csv(text, cols);
  const std::size_t d = cols - 1;
  std::vector<std::set<double>> seen(d);
  for (const auto& r : rows)
    for (std::size_t a = 0; a < d; ++a) seen[a].insert(r[a]);
  std::vector<std::vector<double>> axes;
  for (const auto& s : seen) axes.emplace_back(s.begin(), s.end());
  GridSpec grid(axes);
  if (rows.size() != grid.size()) throw_io("CSV rows do not form a complete tensor grid");
  std::vector<double> values(grid.size(), 0.0);
  std::vector<bool> filled(grid.size(), false);
  std::vector<std::size_t> multi(d);
  for (const auto& r : rows) {
    for (std::size_t a = 0; a < d; ++a)
      multi[a] = static_cast<std::size_t>(std::lower_bound(axes[a].begin(), axes[a].end(), r[a]) - axes[a].begin());
    const std::size_t k = grid.flat_index(multi);
    if (filled[k]) throw_io("duplicate grid node in CSV");
    filled[k] = true;
    values[k] = r[d];
  }
  return build_grid_density(std::move(grid), std::move(values));
}

std::string discrete_measure_to_json(const DiscreteMeasure& measure) {
  return detail::to_json(measure).dump(2) + "\n";
}

DiscreteMeasure discrete_measure_from_json(const std::string& text) {
  const json j = parse(text);
  if (!j.is_object()) throw_io("expected an object with 'points' and 'weights'");
  Mat points = read_rows(j, "points");
  const std::vector<double> w = read_numbers(j, "weights");
  if (w.size() != static_cast<std::size_t>(points.rows())) throw_io("weight count does not match point count");
  return DiscreteMeasure(std::move(points), Eigen::Map<const Vec>(w.data(), static_cast<Eigen::Index>(w.size())));
}

std::string discrete_measure_to_csv(const DiscreteMeasure& measure) {
  std::string out;
  std::vector<std::string> header;
  for (std::size_t a = 0; a < measure.dimension(); ++a) header.push_back("x" + std::to_string(a + 1));
  header.push_back("weight");
  append_row(out, header);
  for (std::size_t i = 0; i < measure.size(); ++i) {
    std::vector<std::string> row;
    for (std::size_t a = 0; a < measure.dimension(); ++a)
      row.push_back(format_number(measure.points()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a))));
    row.push_back(format_number(measure.weight(i)));
    append_row(out, row);
  }
  return out;
}

DiscreteMeasure discrete_measure_from_csv(const std::string& text) {
  std::size_t cols = 0;
  const auto rows = parse_csv(text, cols);
  Mat points(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols - 1));
  Vec w(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c + 1 < cols; ++c)
      points(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    w[static_cast<Eigen::Index>(r)] = rows[r][cols - 1];
  }
  return DiscreteMeasure(std::move(points), std::move(w));
}

// ---------------------------------------------------------------- plans

std::string coupling_to_csv(const Coupling& plan) {
  std::string out = "row,col,mass\n";
  for (const auto& e : plan.entries)
    append_row(out, {std::to_string(e.row), std::to_string(e.col), format_number(e.mass)});
  return out;
}

std::string coupling_to_json(const Coupling& plan, const Vec* source_potential, const Vec* target_potential) {
  json j = detail::to_json(plan);
  if (source_potential) j["source_potential"] = detail::numbers(*source_potential);
  if (target_potential) j["target_potential"] = detail::numbers(*target_potential);
  return j.dump(2) + "\n";
}

std::string potentials_to_csv(const Vec& source_potential, const Vec& target_potential) {
  std::string out = "side,index,value\n";
  for (Eigen::Index i = 0; i < source_potential.size(); ++i)
    append_row(out, {"source", std::to_string(i), format_number(source_potential[i])});
  for (Eigen::Index j = 0; j < target_potential.size(); ++j)
    append_row(out, {"target", std::to_string(j), format_number(target_potential[j])});
  return out;
}

std::string soft_solution_to_json(const SoftSolution& solution) { return detail::to_json(solution).dump(2) + "\n"; }

std::string triangular_map_to_json(const TriangularMap& map) { return detail::to_json(map).dump(2) + "\n"; }

std::string affine_map_to_json(const AffineMap& map) { return detail::to_json(map).dump(2) + "\n"; }

std::string map_table_to_csv(const MapTable& map) {
  std::string out = "atom";
  for (Eigen::Index a = 0; a < map.cols(); ++a) out += ",y" + std::to_string(a + 1);
  out += '\n';
  for (Eigen::Index i = 0; i < map.rows(); ++i) {
    std::vector<std::string> row{std::to_string(i)};
    for (Eigen::Index a = 0; a < map.cols(); ++a) row.push_back(format_number(map(i, a)));
    append_row(out, row);
  }
  return out;
}

std::string ensemble_to_csv(const ParticleEnsemble& e, const double* epsilon, bool header) {
  std::string out;
  const std::size_t d = e.dimension();
  if (header) {
    std::vector<std::string> h;
    if (epsilon) h.push_back("epsilon");
    h.push_back("time");
    h.push_back("particle");
    for (std::size_t a = 0; a < d; ++a) h.push_back("x" + std::to_string(a + 1));
    for (std::size_t a = 0; a < d; ++a) h.push_back("v" + std::to_string(a + 1));
    append_row(out, h);
  }
  for (std::size_t k = 0; k < e.times.size(); ++k) {
    for (std::size_t i = 0; i < e.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      std::vector<std::string> row;
      if (epsilon) row.push_back(format_number(*epsilon));
      row.push_back(format_number(e.times[k]));
      row.push_back(std::to_string(i));
      for (std::size_t a = 0; a < d; ++a) row.push_back(format_number(e.positions[k](ii, static_cast<Eigen::Index>(a))));
      for (std::size_t a = 0; a < d; ++a) row.push_back(format_number(e.velocities(ii, static_cast<Eigen::Index>(a))));
      append_row(out, row);
    }
  }
  return out;
}

std::string matrix_to_csv(const Mat& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> row;
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(format_number(m(i, j)));
    append_row(out, row);
  }
  return out;
}

// -------------------------------------------------------------- reports

std::string sweep_report_to_json(const SweepReport& report) { return detail::to_json(report).dump(2) + "\n"; }

std::string sweep_report_to_csv(const SweepReport& report) {
  std::size_t prefixes = 0;
  for (const auto& c : report.cells) prefixes = std::max(prefixes, c.marginal_agreement.size());
  std::vector<std::string> header{"epsilon", "lambda", "objective", "kl", "transport", "map_distance",
                                  "el_residual", "resolve_gap", "target_tv", "far_from_target", "seconds",
                                  "solver", "iterations", "solver_residual"};
  for (std::size_t k = 1; k <= prefixes; ++k) header.push_back("marginal_agreement_" + std::to_string(k));
  const bool with_bandwidth = report.bandwidths.size() == report.cells.size() && !report.bandwidths.empty();
  if (with_bandwidth) header.insert(header.begin(), "bandwidth");
  std::string out;
  append_row(out, header);
  for (std::size_t k = 0; k < report.cells.size(); ++k) {
    const auto& c = report.cells[k];
    std::vector<std::string> row{format_number(c.epsilon),     format_number(c.lambda),      format_number(c.objective),
                                 format_number(c.kl),          format_number(c.transport),   format_number(c.map_distance),
                                 format_number(c.el_residual), format_number(c.resolve_gap), format_number(c.target_tv),
                                 c.far_from_target ? "1" : "0", format_number(c.seconds),    c.solver,
                                 std::to_string(c.iterations), format_number(c.solver_residual)};
    for (std::size_t p = 0; p < prefixes; ++p)
      row.push_back(p < c.marginal_agreement.size() ? format_number(c.marginal_agreement[p]) : "");
    if (with_bandwidth) row.insert(row.begin(), format_number(report.bandwidths[k]));
    append_row(out, row);
  }
  return out;
}

std::string kl_decay_to_csv(const std::vector<KlDecayRow>& rows) {
  std::string out = "lambda,kl,bound\n";
  for (const auto& r : rows) append_row(out, {format_number(r.lambda), format_number(r.kl), format_number(r.bound)});
  return out;
}

}  // namespace krot
