#include "krot/krot.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <limits>
#include <new>
#include <optional>
#include <sstream>
#include <string>

#include "krot/config.hpp"
#include "krot/cost.hpp"
#include "krot/error.hpp"
#include "krot/experiments.hpp"
#include "krot/io.hpp"
#include "krot/kr.hpp"
#include "krot/measures.hpp"
#include "krot/ot_exact.hpp"
#include "krot/ot_soft.hpp"
#include "krot/run.hpp"

struct krot_measure {
  krot::DiscreteMeasure measure;
};

struct krot_coupling {
  krot::Coupling plan;
};

struct krot_soft_solution {
  krot::SoftSolution solution;
};

namespace {

thread_local std::string g_last_error;

krot_status fail(krot_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs `body`, mapping exceptions onto status codes.
template <typename F>
krot_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return KROT_OK;
  } catch (const krot::Error& e) {
    return fail(static_cast<krot_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(KROT_ERROR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(KROT_ERROR_INTERNAL, e.what());
  } catch (...) {
    return fail(KROT_ERROR_INTERNAL, "unknown error");
  }
}

void require(bool ok, const char* message) {
  if (!ok) krot::throw_invalid(message);
}

krot::Mat read_rows(const double* data, std::size_t rows, std::size_t cols) {
  krot::Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = data[r * cols + c];
  return m;
}

void write_rows(const krot::Mat& m, double* out) {
  const auto cols = static_cast<std::size_t>(m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)] = m(r, c);
}

krot::GaussianMeasure gaussian(std::size_t d, const double* mean, const double* cov) {
  require(d > 0 && mean && cov, "gaussian: null argument");
  krot::Vec m = Eigen::Map<const krot::Vec>(mean, static_cast<Eigen::Index>(d));
  return krot::GaussianMeasure(m, read_rows(cov, d, d));
}

void write_affine(const krot::AffineMap& map, double* matrix, double* offset) {
  if (matrix) write_rows(map.A, matrix);
  if (offset)
    for (Eigen::Index i = 0; i < map.b.size(); ++i) offset[i] = map.b(i);
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

krot::Mat weighted_cost(const krot_measure* source, const krot_measure* target, double epsilon) {
  require(source && target, "null measure");
  require(source->measure.dimension() == target->measure.dimension(), "dimension mismatch");
  const krot::WeightedCost cost(epsilon, source->measure.dimension());
  return krot::cost_matrix(cost, source->measure.points(), target->measure.points());
}

}  // namespace

extern "C" {

const char* krot_version(void) { return "0.1.0"; }

const char* krot_last_error(void) { return g_last_error.c_str(); }

krot_status krot_measure_create(const double* points, const double* weights, size_t n, size_t d,
                                krot_measure** out) {
  return guarded([&] {
    require(points && weights && out, "krot_measure_create: null argument");
    require(n > 0 && d > 0, "krot_measure_create: empty measure");
    krot::Vec w = Eigen::Map<const krot::Vec>(weights, static_cast<Eigen::Index>(n));
    *out = new krot_measure{krot::DiscreteMeasure(read_rows(points, n, d), w)};
  });
}

krot_status krot_measure_from_gaussian(const double* mean, const double* cov, size_t d, size_t nodes, double radius,
                                       krot_measure** out) {
  return guarded([&] {
    require(out != nullptr, "krot_measure_from_gaussian: null output");
    const auto g = gaussian(d, mean, cov);
    const auto fixture = krot::gaussian_grid_fixture(g, g, nodes, radius);
    *out = new krot_measure{fixture.source};
  });
}

void krot_measure_destroy(krot_measure* m) { delete m; }

size_t krot_measure_size(const krot_measure* m) { return m ? m->measure.size() : 0; }

size_t krot_measure_dimension(const krot_measure* m) { return m ? m->measure.dimension() : 0; }

krot_status krot_measure_data(const krot_measure* m, double* points, double* weights) {
  return guarded([&] {
    require(m != nullptr, "krot_measure_data: null measure");
    if (points) write_rows(m->measure.points(), points);
    if (weights)
      for (Eigen::Index i = 0; i < m->measure.weights().size(); ++i) weights[i] = m->measure.weights()(i);
  });
}

krot_status krot_cost_matrix(const krot_measure* source, const krot_measure* target, double epsilon, double* out) {
  return guarded([&] {
    require(out != nullptr, "krot_cost_matrix: null output");
    write_rows(weighted_cost(source, target, epsilon), out);
  });
}

krot_status krot_solve_exact(const krot_measure* source, const krot_measure* target, double epsilon,
                             krot_coupling** plan, double* value) {
  return guarded([&] {
    require(plan != nullptr, "krot_solve_exact: null output");
    const krot::Mat c = weighted_cost(source, target, epsilon);
    auto sol = krot::solve_exact(source->measure, target->measure, c);
    if (value) *value = sol.value;
    *plan = new krot_coupling{std::move(sol.plan)};
  });
}

krot_status krot_kr_plan(const krot_measure* source, const krot_measure* target, krot_coupling** plan) {
  return guarded([&] {
    require(source && target && plan, "krot_kr_plan: null argument");
    *plan = new krot_coupling{krot::kr_plan_discrete(source->measure, target->measure)};
  });
}

void krot_coupling_destroy(krot_coupling* c) { delete c; }

size_t krot_coupling_entry_count(const krot_coupling* c) { return c ? c->plan.entries.size() : 0; }

krot_status krot_coupling_entries(const krot_coupling* c, size_t* rows, size_t* cols, double* masses) {
  return guarded([&] {
    require(c != nullptr, "krot_coupling_entries: null coupling");
    for (std::size_t k = 0; k < c->plan.entries.size(); ++k) {
      const auto& e = c->plan.entries[k];
      if (rows) rows[k] = e.row;
      if (cols) cols[k] = e.col;
      if (masses) masses[k] = e.mass;
    }
  });
}

krot_status krot_coupling_barycentric_map(const krot_coupling* c, double* out) {
  return guarded([&] {
    require(c && out, "krot_coupling_barycentric_map: null argument");
    write_rows(krot::barycentric_map(c->plan), out);
  });
}

krot_status krot_coupling_to_json(const krot_coupling* c, char** json) {
  return guarded([&] {
    require(c && json, "krot_coupling_to_json: null argument");
    *json = copy_string(krot::coupling_to_json(c->plan));
  });
}

krot_status krot_solve_soft(const krot_measure* source, const krot_measure* target, double epsilon, double lambda,
                            krot_soft_method method, double eta, double tolerance, krot_soft_solution** out) {
  return guarded([&] {
    require(out != nullptr, "krot_solve_soft: null output");
    const krot::Mat c = weighted_cost(source, target, epsilon);
    if (method == KROT_SOFT_EXACT) {
      krot::OracleOptions opt;
      opt.lambda = lambda;
      if (tolerance > 0) opt.tolerance = tolerance;
      opt.epsilon = epsilon;
      *out = new krot_soft_solution{krot::exact_soft_oracle(source->measure, target->measure, c, opt)};
    } else if (method == KROT_SOFT_SINKHORN) {
      krot::SinkhornOptions opt;
      opt.lambda = lambda;
      opt.eta = eta;
      if (tolerance > 0) opt.tolerance = tolerance;
      opt.epsilon = epsilon;
      *out = new krot_soft_solution{krot::semi_relaxed_sinkhorn(source->measure, target->measure, c, opt)};
    } else {
      krot::throw_invalid("krot_solve_soft: unknown method");
    }
  });
}

void krot_soft_solution_destroy(krot_soft_solution* s) { delete s; }

double krot_soft_solution_objective(const krot_soft_solution* s) {
  return s ? s->solution.objective : std::numeric_limits<double>::quiet_NaN();
}

double krot_soft_solution_kl(const krot_soft_solution* s) {
  return s ? s->solution.kl : std::numeric_limits<double>::quiet_NaN();
}

double krot_soft_solution_transport(const krot_soft_solution* s) {
  return s ? s->solution.transport : std::numeric_limits<double>::quiet_NaN();
}

krot_status krot_soft_solution_marginal(const krot_soft_solution* s, double* out) {
  return guarded([&] {
    require(s && out, "krot_soft_solution_marginal: null argument");
    const krot::Vec q = s->solution.plan.col_sums();
    for (Eigen::Index j = 0; j < q.size(); ++j) out[j] = q(j);
  });
}

krot_status krot_soft_solution_coupling(const krot_soft_solution* s, krot_coupling** out) {
  return guarded([&] {
    require(s && out, "krot_soft_solution_coupling: null argument");
    *out = new krot_coupling{s->solution.plan};
  });
}

krot_status krot_soft_solution_to_json(const krot_soft_solution* s, char** json) {
  return guarded([&] {
    require(s && json, "krot_soft_solution_to_json: null argument");
    *json = copy_string(krot::soft_solution_to_json(s->solution));
  });
}

krot_status krot_gaussian_kr_map(size_t d, const double* mean0, const double* cov0, const double* mean1,
                                 const double* cov1, double* matrix, double* offset) {
  return guarded([&] {
    write_affine(krot::kr_map_gaussian(gaussian(d, mean0, cov0), gaussian(d, mean1, cov1)), matrix, offset);
  });
}

krot_status krot_gaussian_brenier_map(size_t d, const double* mean0, const double* cov0, const double* mean1,
                                      const double* cov1, double epsilon, double* matrix, double* offset) {
  return guarded([&] {
    const krot::WeightedCost cost(epsilon, d);
    write_affine(krot::brenier_gaussian_weighted(gaussian(d, mean0, cov0), gaussian(d, mean1, cov1), cost), matrix,
                 offset);
  });
}

krot_status krot_run(const char* config_path, const char* experiment, const char* out_dir, size_t threads,
                     int quiet) {
  int code = 0;
  std::string message;
  const krot_status parsed = guarded([&] {
    require(config_path != nullptr, "krot_run: null config path");
    std::optional<krot::Experiment> override_exp;
    if (experiment) {
      override_exp = krot::parse_experiment(experiment);
      if (!override_exp) krot::throw_invalid(std::string("unknown experiment '") + experiment + "'");
    }
    const auto cfg = krot::parse_config(config_path, override_exp);
    krot::RunOptions opt;
    if (out_dir) opt.output_dir = out_dir;
    opt.threads = threads == 0 ? 1 : threads;
    opt.quiet = quiet != 0;
    std::ostringstream err;
    code = krot::run(cfg, opt, std::cout, err);
    message = err.str();
  });
  if (parsed != KROT_OK) return parsed;
  if (code != 0) {
    while (!message.empty() && message.back() == '\n') message.pop_back();
    return fail(static_cast<krot_status>(code), message);
  }
  return KROT_OK;
}

void krot_string_free(char* s) { std::free(s); }

}  // extern "C"
