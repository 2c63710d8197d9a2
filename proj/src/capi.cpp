#include "perp/perp.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <optional>
#include <string>

#include "perp/errors.hpp"
#include "perp/json_io.hpp"
#include "perp/reporting.hpp"

struct perp_model {
    perp::FactorModel model;
};

struct perp_ensemble {
    perp::MatrixEnsemble ens;
};

struct perp_curve {
    perp::TailCurve curve;
};

namespace {

using nlohmann::json;

thread_local std::string g_error;
thread_local std::string g_error_json = "{}";

void set_error(perp::Status s, const std::string& msg, json extra = json::object()) {
    g_error = msg;
    extra["status"] = perp::status_name(s);
    extra["message"] = msg;
    g_error_json = extra.dump();
}

void clear_error() {
    g_error.clear();
    g_error_json = "{}";
}

perp_status to_c(perp::Status s) { return static_cast<perp_status>(s); }

// Runs fn, translating exceptions into status codes and thread-local error details.
template <class Fn>
perp_status guarded(Fn&& fn) {
    clear_error();
    try {
        fn();
        return PERP_OK;
    } catch (const perp::TruncationError& e) {
        set_error(e.status(), e.what(), json{{"partial_sum", e.partial_sum()}, {"bound", e.bound()}});
        return to_c(e.status());
    } catch (const perp::InfeasibleError& e) {
        set_error(e.status(), e.what(), json{{"logx_min", e.logx_min()}, {"logx_max", e.logx_max()}});
        return to_c(e.status());
    } catch (const perp::Error& e) {
        set_error(e.status(), e.what());
        return to_c(e.status());
    } catch (const json::exception& e) {
        set_error(perp::Status::invalid_argument, e.what());
        return PERP_E_INVALID_ARGUMENT;
    } catch (const std::bad_alloc&) {
        set_error(perp::Status::internal, "out of memory");
        return PERP_E_INTERNAL;
    } catch (const std::exception& e) {
        set_error(perp::Status::internal, e.what());
        return PERP_E_INTERNAL;
    }
}

void need(const void* p, const char* name) {
    if (!p) throw perp::Error(perp::Status::invalid_argument, std::string(name) + " must not be NULL");
}

char* dup(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

perp::CramerSolution from_c(const perp_cramer& c) {
    perp::CramerSolution s;
    s.alpha = c.alpha;
    s.m_alpha = c.m_alpha;
    s.sigma2_alpha = c.sigma2_alpha;
    s.drift = c.drift;
    s.is_signed = c.is_signed != 0;
    s.m_tilde = c.m_tilde;
    s.sigma2_tilde = c.sigma2_tilde;
    s.leading_constant = c.leading_constant;
    s.positive_fraction = c.positive_fraction;
    s.h_residual = c.h_residual;
    if (!(s.alpha > 0.0) || !(s.m_tilde > 0.0))
        throw perp::Error(perp::Status::invalid_argument, "Cramér solution must have alpha > 0 and m_tilde > 0");
    return s;
}

perp_cramer to_c(const perp::CramerSolution& s) {
    return perp_cramer{s.alpha,  s.m_alpha,      s.sigma2_alpha,     s.drift,           s.is_signed ? 1 : 0,
                       s.m_tilde, s.sigma2_tilde, s.leading_constant, s.positive_fraction, s.h_residual};
}

perp::SimulationConfig from_c(const perp_sim_config& c) {
    perp::SimulationConfig s;
    s.n_paths = c.n_paths;
    s.seed = c.seed;
    s.truncation.mode = c.truncation_fixed ? perp::Truncation::Mode::fixed : perp::Truncation::Mode::adaptive;
    s.truncation.fixed_n = c.fixed_n;
    s.truncation.eps = c.eps;
    s.truncation.gamma = c.gamma;
    s.workers = c.workers ? c.workers : 1;
    return s;
}

void put(perp_estimate* out, const perp::TiltedEstimate& e) {
    *out = perp_estimate{e.value, e.std_error, e.n_samples, e.truncation_bound};
}

}  // namespace

extern "C" {

const char* perp_version(void) { return "1.0.0"; }

const char* perp_status_name(perp_status status) { return perp::status_name(static_cast<perp::Status>(status)); }

const char* perp_last_error(void) { return g_error.c_str(); }

const char* perp_last_error_json(void) { return g_error_json.c_str(); }

int perp_status_is_numerical(perp_status status) {
    return status != PERP_OK && !perp::is_validation(static_cast<perp::Status>(status));
}

void perp_string_free(char* s) { std::free(s); }

void perp_sim_config_init(perp_sim_config* cfg) {
    if (!cfg) return;
    *cfg = perp_sim_config{100000, 0, 0, 0, 1e-12, 0.0, 1};
}

perp_status perp_model_from_json(const char* text, perp_model** out) {
    return guarded([&] {
        need(text, "json");
        need(out, "out");
        *out = new perp_model{perp::model_from_string(text)};
    });
}

void perp_model_free(perp_model* model) { delete model; }

perp_status perp_model_to_json(const perp_model* model, char** out) {
    return guarded([&] {
        need(model, "model");
        need(out, "out");
        *out = dup(perp::model_to_json(model->model).dump());
    });
}

perp_status perp_model_moments(const perp_model* model, double s, double* h, double* m, double* sigma2) {
    return guarded([&] {
        need(model, "model");
        perp::MomentReport r = model->model.moments(s);
        if (h) *h = r.h;
        if (m) *m = r.m;
        if (sigma2) *sigma2 = r.sigma2;
    });
}

perp_status perp_model_sample(const perp_model* model, uint64_t seed, double tilt, size_t n, double* out) {
    return guarded([&] {
        need(model, "model");
        if (n) need(out, "out");
        perp::Stream rng = perp::make_stream(seed, perp::stream_tag("model_sample"), 0);
        for (size_t i = 0; i < n; ++i) out[i] = model->model.sample_tilted(tilt, rng);
    });
}

perp_status perp_solve_alpha(const perp_model* model, const double* bracket, perp_cramer* out) {
    return guarded([&] {
        need(model, "model");
        need(out, "out");
        std::optional<perp::Interval> hint;
        if (bracket) hint = perp::Interval{bracket[0], bracket[1]};
        *out = to_c(perp::solve_alpha(model->model, hint));
    });
}

perp_status perp_check_conditions(const perp_model* model, const perp_cramer* sol, perp_conditions* out) {
    return guarded([&] {
        need(model, "model");
        need(out, "out");
        std::optional<perp::CramerSolution> s;
        if (sol) s = from_c(*sol);
        perp::ConditionReport r = perp::check_conditions(model->model, s ? &*s : nullptr);
        *out = perp_conditions{r.finite_second_log_moment, r.arithmetic, r.lattice_span, r.degenerate, r.cramer_root};
    });
}

perp_status perp_leading_tail(const perp_cramer* sol, double log_x, double* out) {
    return guarded([&] {
        need(sol, "sol");
        need(out, "out");
        *out = perp::leading_tail(from_c(*sol), log_x);
    });
}

perp_status perp_renewal_tail(const perp_cramer* sol, double log_x, double* out) {
    return guarded([&] {
        need(sol, "sol");
        need(out, "out");
        *out = perp::renewal_tail(from_c(*sol), log_x);
    });
}

perp_status perp_normal_approx_tail(const perp_cramer* sol, double log_x, double* out) {
    return guarded([&] {
        need(sol, "sol");
        need(out, "out");
        *out = perp::normal_approx_tail(from_c(*sol), log_x);
    });
}

perp_status perp_tilted_exact_tail(const perp_model* model, const perp_cramer* sol, double log_x, size_t n_terms,
                                   double* out, double* bound) {
    return guarded([&] {
        need(model, "model");
        need(sol, "sol");
        need(out, "out");
        std::optional<std::size_t> terms;
        if (n_terms) terms = n_terms;
        try {
            *out = perp::tilted_exact_tail(model->model, from_c(*sol), log_x, terms);
            if (bound) *bound = 0.0;
        } catch (const perp::TruncationError& e) {
            *out = e.partial_sum();
            if (bound) *bound = e.bound();
            throw;
        }
    });
}

perp_status perp_kesten_ratio(const perp_cramer* sol, double kesten_constant, double log_x, double* out) {
    return guarded([&] {
        need(sol, "sol");
        need(out, "out");
        *out = perp::kesten_ratio(from_c(*sol), kesten_constant, log_x);
    });
}

perp_status perp_horizon(const perp_cramer* sol, double log_x, double xi, size_t* out) {
    return guarded([&] {
        need(sol, "sol");
        need(out, "out");
        *out = perp::horizon(from_c(*sol), log_x, xi).n_max;
    });
}

perp_status perp_curve_build(const perp_model* model, const perp_cramer* sol, double logx_min, double logx_max,
                             double points_per_decade, int columns, perp_curve** out) {
    return guarded([&] {
        need(model, "model");
        need(sol, "sol");
        need(out, "out");
        perp::CurveOptions opts;
        opts.logx_min = logx_min;
        opts.logx_max = logx_max;
        opts.points_per_decade = points_per_decade;
        opts.normal = (columns & PERP_COL_NORMAL) != 0;
        opts.tilted = (columns & PERP_COL_TILTED) != 0;
        *out = new perp_curve{perp::build_tail_curve(model->model, from_c(*sol), opts)};
    });
}

void perp_curve_free(perp_curve* curve) { delete curve; }

size_t perp_curve_size(const perp_curve* curve) { return curve ? curve->curve.size() : 0; }

perp_status perp_curve_json(const perp_curve* curve, char** out) {
    return guarded([&] {
        need(curve, "curve");
        need(out, "out");
        *out = dup(perp::to_json(curve->curve).dump());
    });
}

perp_status perp_curve_csv(const perp_curve* curve, const char* comments, char** out) {
    return guarded([&] {
        need(curve, "curve");
        need(out, "out");
        std::vector<std::string> lines;
        if (comments) {
            std::string all(comments), line;
            for (char c : all) {
                if (c == '\n') {
                    lines.push_back(line);
                    line.clear();
                } else {
                    line += c;
                }
            }
            if (!line.empty()) lines.push_back(line);
        }
        *out = dup(perp::tail_curve_csv(curve->curve, lines));
    });
}

perp_status perp_curve_svg(const perp_curve* curve, const char* style_json, char** out) {
    return guarded([&] {
        need(curve, "curve");
        need(out, "out");
        perp::PlotStyle style;
        if (style_json) {
            json j;
            try {
                j = json::parse(style_json);
            } catch (const json::parse_error& e) {
                throw perp::Error(perp::Status::parse, std::string("malformed style JSON: ") + e.what());
            }
            if (j.contains("title")) style.title = j.at("title").get<std::string>();
            if (j.contains("panels")) style.panels = j.at("panels").get<std::vector<std::vector<std::string>>>();
            if (j.contains("panel_titles")) style.panel_titles = j.at("panel_titles").get<std::vector<std::string>>();
            if (j.contains("x_label")) style.x_label = j.at("x_label").get<std::string>();
            if (j.contains("y_label")) style.y_label = j.at("y_label").get<std::string>();
        }
        *out = dup(perp::emit_plot(curve->curve, style));
    });
}

perp_status perp_simulate_y_tail(const perp_model* model, const perp_cramer* sol, const perp_sim_config* cfg,
                                 double log_x, perp_estimate* upper, perp_estimate* lower) {
    return guarded([&] {
        need(model, "model");
        need(cfg, "cfg");
        std::optional<perp::CramerSolution> s;
        if (sol) s = from_c(*sol);
        std::vector<double> y = perp::simulate_Y(model->model, s ? &*s : nullptr, from_c(*cfg));
        perp::TailCount t = perp::count_tails(y, {log_x}).front();
        if (upper) *upper = perp_estimate{t.upper(), t.upper_se(), t.n, 0.0};
        if (lower) *lower = perp_estimate{t.lower(), t.lower_se(), t.n, 0.0};
    });
}

perp_status perp_is_tail_pn(const perp_model* model, const perp_cramer* sol, size_t n, double log_x, uint64_t n_samples,
                            uint64_t seed, unsigned workers, perp_estimate* out) {
    return guarded([&] {
        need(model, "model");
        need(sol, "sol");
        need(out, "out");
        put(out, perp::is_tail_pn(model->model, from_c(*sol), n, log_x, n_samples, seed, workers ? workers : 1));
    });
}

perp_status perp_is_tail_p(const perp_model* model, const perp_cramer* sol, double log_x, uint64_t samples_per_n,
                           uint64_t seed, unsigned workers, size_t n_max, perp_estimate* out, char** per_n_json) {
    return guarded([&] {
        need(model, "model");
        need(sol, "sol");
        need(out, "out");
        perp::TailSumOptions opts;
        opts.samples_per_n = samples_per_n;
        opts.seed = seed;
        opts.workers = workers ? workers : 1;
        opts.n_max = n_max;
        perp::TiltedEstimate e = perp::is_tail_p(model->model, from_c(*sol), log_x, opts);
        put(out, e);
        if (per_n_json) *per_n_json = dup(perp::to_json(e).at("per_n").dump());
    });
}

perp_status perp_brute_force_p(const perp_model* model, double log_x, size_t n_max, double* out) {
    return guarded([&] {
        need(model, "model");
        need(out, "out");
        *out = perp::brute_force_p(model->model, log_x, n_max);
    });
}

perp_status perp_simulate_ruin(const perp_model* model, const perp_cramer* sol, double log_x, const perp_sim_config* cfg,
                               int absolute, perp_estimate* out) {
    return guarded([&] {
        need(model, "model");
        need(cfg, "cfg");
        need(out, "out");
        std::optional<perp::CramerSolution> s;
        if (sol) s = from_c(*sol);
        perp::RuinOptions opts;
        opts.absolute = absolute != 0;
        put(out, perp::simulate_ruin(model->model, s ? &*s : nullptr, log_x, from_c(*cfg), opts));
    });
}

perp_status perp_simulate_lindley(const perp_model* model, size_t n_steps, const perp_sim_config* cfg,
                                  const double* u_grid, size_t n_u, char** json_out) {
    return guarded([&] {
        need(model, "model");
        need(cfg, "cfg");
        need(json_out, "json_out");
        if (n_u) need(u_grid, "u_grid");
        std::vector<double> u(u_grid, u_grid + n_u);
        *json_out = dup(perp::to_json(perp::simulate_lindley(model->model, n_steps, from_c(*cfg), u)).dump());
    });
}

perp_status perp_ev_normalizer(const perp_cramer* sol, double n, double* out) {
    return guarded([&] {
        need(sol, "sol");
        need(out, "out");
        *out = perp::ev_normalizer(from_c(*sol), n);
    });
}

perp_status perp_goldie_constant(const perp_model* model, const perp_cramer* sol, const perp_sim_config* cfg,
                                 perp_estimate* out) {
    return guarded([&] {
        need(model, "model");
        need(sol, "sol");
        need(cfg, "cfg");
        need(out, "out");
        perp::Estimate e = perp::goldie_constant(model->model, from_c(*sol), from_c(*cfg));
        *out = perp_estimate{e.value, e.std_error, e.n_samples, 0.0};
    });
}

perp_status perp_ensemble_from_json(const char* text, perp_ensemble** out) {
    return guarded([&] {
        need(text, "json");
        need(out, "out");
        *out = new perp_ensemble{perp::ensemble_from_string(text)};
    });
}

void perp_ensemble_free(perp_ensemble* ens) { delete ens; }

size_t perp_ensemble_dim(const perp_ensemble* ens) { return ens ? ens->ens.dim() : 0; }

perp_status perp_estimate_h(const perp_ensemble* ens, double s, size_t depth, uint64_t n_samples, uint64_t seed,
                            unsigned workers, double* value, double* std_error) {
    return guarded([&] {
        need(ens, "ensemble");
        perp::HEstimate h = perp::estimate_h(ens->ens, s, depth, n_samples, seed, workers ? workers : 1);
        if (value) *value = h.value;
        if (std_error) *std_error = h.std_error;
    });
}

perp_status perp_estimate_lyapunov(const perp_ensemble* ens, size_t depth, uint64_t n_samples, uint64_t seed,
                                   unsigned workers, double* gamma, double* std_error, size_t* depth_used) {
    return guarded([&] {
        need(ens, "ensemble");
        perp::LyapunovEstimate l = perp::estimate_lyapunov(ens->ens, depth, n_samples, seed, workers ? workers : 1);
        if (gamma) *gamma = l.gamma;
        if (std_error) *std_error = l.std_error;
        if (depth_used) *depth_used = l.depth;
    });
}

perp_status perp_mv_solve(const perp_ensemble* ens, size_t depth, uint64_t n_samples, double bracket_lo, double bracket_hi,
                          int method, uint64_t seed, unsigned workers, char** json_out) {
    return guarded([&] {
        need(ens, "ensemble");
        need(json_out, "json_out");
        perp::MvSolveOptions opts;
        opts.depth = depth;
        opts.n_samples = n_samples;
        opts.bracket_lo = bracket_lo;
        opts.bracket_hi = bracket_hi;
        if (method != PERP_MV_RESAMPLED && method != PERP_MV_DIRECT)
            throw perp::Error(perp::Status::invalid_argument, "unknown multivariate method " + std::to_string(method));
        opts.method = method == PERP_MV_DIRECT ? perp::MvMethod::direct : perp::MvMethod::resampled;
        opts.seed = seed;
        opts.workers = workers ? workers : 1;
        *json_out = dup(perp::to_json(perp::solve_alpha_mv(ens->ens, opts)).dump());
    });
}

perp_status perp_mv_tail(const perp_ensemble* ens, const char* mv_json, const double* u, const double* v,
                         const double* log_x, size_t n_x, const perp_sim_config* cfg, char** json_out) {
    return guarded([&] {
        need(ens, "ensemble");
        need(mv_json, "mv_json");
        need(u, "u");
        need(v, "v");
        need(cfg, "cfg");
        need(json_out, "json_out");
        if (n_x) need(log_x, "log_x");
        json j;
        try {
            j = json::parse(mv_json);
        } catch (const json::parse_error& e) {
            throw perp::Error(perp::Status::parse, std::string("malformed multivariate solution JSON: ") + e.what());
        }
        perp::MultivariateCramer mv = perp::mv_cramer_from_json(j);
        const std::size_t d = ens->ens.dim();
        std::vector<double> uu(u, u + d), vv(v, v + d), grid(log_x, log_x + n_x);
        *json_out = dup(perp::to_json(perp::mv_tail_estimates(ens->ens, mv, uu, vv, grid, from_c(*cfg))).dump());
    });
}

}  // extern "C"
