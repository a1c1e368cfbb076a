/* C interface to the krot transport library.
 *
 * All functions return a krot_status; on failure krot_last_error() describes
 * the problem (per thread, valid until the next call on that thread). Objects
 * are opaque handles released with the matching *_destroy function. Arrays are
 * row-major doubles.
 */
#ifndef KROT_KROT_H
#define KROT_KROT_H

#include <stddef.h>

#if defined(_WIN32)
#if defined(KROT_BUILDING_LIBRARY)
#define KROT_API __declspec(dllexport)
#else
#define KROT_API __declspec(dllimport)
#endif
#else
#define KROT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum krot_status {
  KROT_OK = 0,
  KROT_ERROR_INVALID_ARGUMENT = 1,
  KROT_ERROR_DOMAIN = 2,
  KROT_ERROR_SOLVER = 3,
  KROT_ERROR_IO = 4,
  KROT_ERROR_INTERNAL = 5
} krot_status;

typedef enum krot_soft_method { KROT_SOFT_EXACT = 0, KROT_SOFT_SINKHORN = 1 } krot_soft_method;

typedef struct krot_measure krot_measure;
typedef struct krot_coupling krot_coupling;
typedef struct krot_soft_solution krot_soft_solution;

KROT_API const char* krot_version(void);
KROT_API const char* krot_last_error(void);

/* ---- measures ---- */

/* points: n x d, weights: n (rescaled to sum to one). */
KROT_API krot_status krot_measure_create(const double* points, const double* weights, size_t n, size_t d,
                                         krot_measure** out);
/* Gaussian N(mean, cov) discretized on a nodes^d grid over mean +- radius sd. */
KROT_API krot_status krot_measure_from_gaussian(const double* mean, const double* cov, size_t d, size_t nodes,
                                                double radius, krot_measure** out);
KROT_API void krot_measure_destroy(krot_measure* m);
KROT_API size_t krot_measure_size(const krot_measure* m);
KROT_API size_t krot_measure_dimension(const krot_measure* m);
/* Copies n*d points and n weights; either pointer may be NULL. */
KROT_API krot_status krot_measure_data(const krot_measure* m, double* points, double* weights);

/* out: n x m matrix of sum_i eps^i (x_i - y_i)^2. */
KROT_API krot_status krot_cost_matrix(const krot_measure* source, const krot_measure* target, double epsilon,
                                      double* out);

/* ---- hard transport ---- */

KROT_API krot_status krot_solve_exact(const krot_measure* source, const krot_measure* target, double epsilon,
                                      krot_coupling** plan, double* value);
/* Knothe-Rosenblatt plan by recursive north-west-corner matching. */
KROT_API krot_status krot_kr_plan(const krot_measure* source, const krot_measure* target, krot_coupling** plan);
KROT_API void krot_coupling_destroy(krot_coupling* c);
KROT_API size_t krot_coupling_entry_count(const krot_coupling* c);
/* Fills count entries; any output pointer may be NULL. */
KROT_API krot_status krot_coupling_entries(const krot_coupling* c, size_t* rows, size_t* cols, double* masses);
/* out: n x d barycentric images of the source atoms. */
KROT_API krot_status krot_coupling_barycentric_map(const krot_coupling* c, double* out);
/* Caller frees *json with krot_string_free. */
KROT_API krot_status krot_coupling_to_json(const krot_coupling* c, char** json);

/* ---- soft transport ---- */

/* eta and tolerance are used by the Sinkhorn method only (tolerance also bounds
 * the exact method's KKT residual). */
KROT_API krot_status krot_solve_soft(const krot_measure* source, const krot_measure* target, double epsilon,
                                     double lambda, krot_soft_method method, double eta, double tolerance,
                                     krot_soft_solution** out);
KROT_API void krot_soft_solution_destroy(krot_soft_solution* s);
KROT_API double krot_soft_solution_objective(const krot_soft_solution* s);
KROT_API double krot_soft_solution_kl(const krot_soft_solution* s);
KROT_API double krot_soft_solution_transport(const krot_soft_solution* s);
/* Second marginal, one mass per target atom. */
KROT_API krot_status krot_soft_solution_marginal(const krot_soft_solution* s, double* out);
/* New handle holding a copy of the plan. */
KROT_API krot_status krot_soft_solution_coupling(const krot_soft_solution* s, krot_coupling** out);
KROT_API krot_status krot_soft_solution_to_json(const krot_soft_solution* s, char** json);

/* ---- Gaussian closed forms (matrix d x d, offset d) ---- */

KROT_API krot_status krot_gaussian_kr_map(size_t d, const double* mean0, const double* cov0, const double* mean1,
                                          const double* cov1, double* matrix, double* offset);
KROT_API krot_status krot_gaussian_brenier_map(size_t d, const double* mean0, const double* cov0,
                                               const double* mean1, const double* cov1, double epsilon,
                                               double* matrix, double* offset);

/* ---- runs ---- */

/* Runs a JSON config. experiment may be NULL (taken from the file); out_dir
 * may be NULL (taken from output.dir). Summary lines go to stdout unless quiet. */
KROT_API krot_status krot_run(const char* config_path, const char* experiment, const char* out_dir, size_t threads,
                              int quiet);

KROT_API void krot_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* KROT_KROT_H */
