#ifndef PERP_PERP_H
#define PERP_PERP_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define PERP_API __attribute__((visibility("default")))
#else
#define PERP_API
#endif

typedef enum perp_status {
    PERP_OK = 0,
    PERP_E_INVALID_ARGUMENT = 1,
    PERP_E_PARSE = 2,
    PERP_E_DOMAIN = 3,
    PERP_E_NO_ROOT = 4,
    PERP_E_BOUNDARY = 5,
    PERP_E_TRUNCATION = 6,
    PERP_E_UNSUPPORTED = 7,
    PERP_E_NUMERICAL = 8,
    PERP_E_INFEASIBLE = 9,
    PERP_E_GUARD = 10,
    PERP_E_IO = 11,
    PERP_E_INTERNAL = 12
} perp_status;

typedef struct perp_model perp_model;
typedef struct perp_ensemble perp_ensemble;
typedef struct perp_curve perp_curve;

typedef struct perp_cramer {
    double alpha;
    double m_alpha;
    double sigma2_alpha;
    double drift;
    int is_signed;
    double m_tilde;
    double sigma2_tilde;
    double leading_constant;
    double positive_fraction;
    double h_residual;
} perp_cramer;

typedef struct perp_conditions {
    int finite_second_log_moment;
    int arithmetic;
    double lattice_span;
    int degenerate;
    int cramer_root;
} perp_conditions;

typedef struct perp_sim_config {
    uint64_t n_paths;
    uint64_t seed;
    int truncation_fixed; /* 0: adaptive (eps, gamma); 1: fixed_n rows */
    size_t fixed_n;
    double eps;
    double gamma; /* 0 selects alpha / 2 */
    unsigned workers;
} perp_sim_config;

typedef struct perp_estimate {
    double value;
    double std_error;
    uint64_t n_samples;
    double truncation_bound;
} perp_estimate;

enum { PERP_COL_NORMAL = 1, PERP_COL_TILTED = 2 };

PERP_API const char* perp_version(void);
PERP_API const char* perp_status_name(perp_status status);
/* Details of the last failure on the calling thread. The JSON form carries
   {"status", "message"} plus "partial_sum"/"bound" or "logx_min"/"logx_max" when relevant. */
PERP_API const char* perp_last_error(void);
PERP_API const char* perp_last_error_json(void);
/* 0 for validation failures (CLI exit 2), 1 for numerical failures (CLI exit 3). */
PERP_API int perp_status_is_numerical(perp_status status);
PERP_API void perp_string_free(char* s);
PERP_API void perp_sim_config_init(perp_sim_config* cfg);

/* Factor models. */
PERP_API perp_status perp_model_from_json(const char* json, perp_model** out);
PERP_API void perp_model_free(perp_model* model);
PERP_API perp_status perp_model_to_json(const perp_model* model, char** out);
PERP_API perp_status perp_model_moments(const perp_model* model, double s, double* h, double* m, double* sigma2);
PERP_API perp_status perp_model_sample(const perp_model* model, uint64_t seed, double tilt, size_t n, double* out);

/* Cramér exponent. bracket may be NULL or point to {lo, hi}. */
PERP_API perp_status perp_solve_alpha(const perp_model* model, const double* bracket, perp_cramer* out);
PERP_API perp_status perp_check_conditions(const perp_model* model, const perp_cramer* sol, perp_conditions* out);

/* Tail evaluations take log x. */
PERP_API perp_status perp_leading_tail(const perp_cramer* sol, double log_x, double* out);
PERP_API perp_status perp_renewal_tail(const perp_cramer* sol, double log_x, double* out);
PERP_API perp_status perp_normal_approx_tail(const perp_cramer* sol, double log_x, double* out);
/* n_terms = 0 selects the adaptive horizon. On PERP_E_TRUNCATION, out and bound hold the partial sum and bound. */
PERP_API perp_status perp_tilted_exact_tail(const perp_model* model, const perp_cramer* sol, double log_x, size_t n_terms,
                                            double* out, double* bound);
PERP_API perp_status perp_kesten_ratio(const perp_cramer* sol, double kesten_constant, double log_x, double* out);
PERP_API perp_status perp_horizon(const perp_cramer* sol, double log_x, double xi, size_t* out);

PERP_API perp_status perp_curve_build(const perp_model* model, const perp_cramer* sol, double logx_min, double logx_max,
                                      double points_per_decade, int columns, perp_curve** out);
PERP_API void perp_curve_free(perp_curve* curve);
PERP_API size_t perp_curve_size(const perp_curve* curve);
PERP_API perp_status perp_curve_json(const perp_curve* curve, char** out);
/* comments: newline-separated lines written as "# " comments before the header; may be NULL. */
PERP_API perp_status perp_curve_csv(const perp_curve* curve, const char* comments, char** out);
/* style_json: NULL or {"title", "panels": [[column, ...], ...], "panel_titles", "x_label", "y_label"}. */
PERP_API perp_status perp_curve_svg(const perp_curve* curve, const char* style_json, char** out);

/* Monte Carlo. */
PERP_API perp_status perp_simulate_y_tail(const perp_model* model, const perp_cramer* sol, const perp_sim_config* cfg,
                                          double log_x, perp_estimate* upper, perp_estimate* lower);
PERP_API perp_status perp_is_tail_pn(const perp_model* model, const perp_cramer* sol, size_t n, double log_x,
                                     uint64_t n_samples, uint64_t seed, unsigned workers, perp_estimate* out);
/* per_n_json may be NULL; otherwise receives a JSON array of {n, value, std_error, n_samples}. */
PERP_API perp_status perp_is_tail_p(const perp_model* model, const perp_cramer* sol, double log_x, uint64_t samples_per_n,
                                    uint64_t seed, unsigned workers, size_t n_max, perp_estimate* out, char** per_n_json);
PERP_API perp_status perp_brute_force_p(const perp_model* model, double log_x, size_t n_max, double* out);
/* sol may be NULL when |X| <= 1 almost surely. */
PERP_API perp_status perp_simulate_ruin(const perp_model* model, const perp_cramer* sol, double log_x,
                                        const perp_sim_config* cfg, int absolute, perp_estimate* out);
PERP_API perp_status perp_simulate_lindley(const perp_model* model, size_t n_steps, const perp_sim_config* cfg,
                                           const double* u_grid, size_t n_u, char** json_out);
PERP_API perp_status perp_ev_normalizer(const perp_cramer* sol, double n, double* out);
PERP_API perp_status perp_goldie_constant(const perp_model* model, const perp_cramer* sol, const perp_sim_config* cfg,
                                          perp_estimate* out);

/* Matrix ensembles. Multivariate results travel as JSON documents. */
PERP_API perp_status perp_ensemble_from_json(const char* json, perp_ensemble** out);
PERP_API void perp_ensemble_free(perp_ensemble* ens);
PERP_API size_t perp_ensemble_dim(const perp_ensemble* ens);
PERP_API perp_status perp_estimate_h(const perp_ensemble* ens, double s, size_t depth, uint64_t n_samples, uint64_t seed,
                                     unsigned workers, double* value, double* std_error);
PERP_API perp_status perp_estimate_lyapunov(const perp_ensemble* ens, size_t depth, uint64_t n_samples, uint64_t seed,
                                            unsigned workers, double* gamma, double* std_error, size_t* depth_used);
enum { PERP_MV_RESAMPLED = 0, PERP_MV_DIRECT = 1 };
PERP_API perp_status perp_mv_solve(const perp_ensemble* ens, size_t depth, uint64_t n_samples, double bracket_lo,
                                   double bracket_hi, int method, uint64_t seed, unsigned workers, char** json_out);
/* mv_json is the document produced by perp_mv_solve. */
PERP_API perp_status perp_mv_tail(const perp_ensemble* ens, const char* mv_json, const double* u, const double* v,
                                  const double* log_x, size_t n_x, const perp_sim_config* cfg, char** json_out);

#ifdef __cplusplus
}
#endif

#endif
