#include "experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include <unistd.h>

#include "perp/perp.h"

namespace perpcli {

namespace {

// C API failure, carries the status and the library's JSON error document.
struct ApiError {
    perp_status status;
    std::string detail;
};

void check(perp_status st) {
    if (st != PERP_OK) throw ApiError{st, perp_last_error_json()};
}

struct ModelFree {
    void operator()(perp_model* m) const { perp_model_free(m); }
};
struct EnsembleFree {
    void operator()(perp_ensemble* e) const { perp_ensemble_free(e); }
};
struct CurveFree {
    void operator()(perp_curve* c) const { perp_curve_free(c); }
};
using ModelPtr = std::unique_ptr<perp_model, ModelFree>;
using EnsemblePtr = std::unique_ptr<perp_ensemble, EnsembleFree>;
using CurvePtr = std::unique_ptr<perp_curve, CurveFree>;

// Takes ownership of a malloc'd string from the library.
std::string take(char* s) {
    std::string out = s ? s : "";
    perp_string_free(s);
    return out;
}

const json& defaults_for(const std::string& command) {
    static const json table = {
        {"alpha", {{"bracket", nullptr}}},
        {"tail", {{"logx_min", 5.0}, {"logx_max", 100.0}, {"points_per_decade", 50.0}, {"columns", nullptr}}},
        {"fig2a", {{"logx_min", 20.0}, {"logx_max", 100.0}, {"points_per_decade", 50.0}}},
        {"simulate-y",
         {{"logx", 4.0}, {"paths", 1000000}, {"truncation", "adaptive"}, {"fixed_n", 0}, {"eps", 1e-12}, {"gamma", 0.0}}},
        {"is-tail", {{"logx", 5.0}, {"samples_per_n", 10000}, {"n_max", 0}}},
        {"ruin", {{"logx", 10.0}, {"paths", 100000}, {"absolute", false}}},
        {"lindley", {{"u", {1.0, 2.0, 4.0}}, {"steps", 10000}, {"paths", 100}}},
        {"goldie", {{"paths", 100000}}},
        {"mv-alpha", {{"depth", 30}, {"samples", 100000}, {"bracket", {0.05, 4.0}}, {"method", "resampled"}}},
        {"mv-tail",
         {{"u", nullptr},
          {"v", nullptr},
          {"logx", {2.0, 3.0, 4.0}},
          {"paths", 100000},
          {"depth", 30},
          {"samples", 100000},
          {"bracket", {0.05, 4.0}},
          {"method", "resampled"}}},
    };
    auto it = table.find(command);
    if (it == table.end()) throw SpecError("unknown command '" + command + "'");
    return *it;
}

std::string timestamp() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

template <class T>
T param(const ExperimentSpec& s, const char* key) {
    try {
        return s.parameters.at(key).get<T>();
    } catch (const json::exception& e) {
        throw SpecError(std::string("parameter '") + key + "': " + e.what());
    }
}

std::optional<std::vector<double>> opt_vec(const ExperimentSpec& s, const char* key) {
    const json& v = s.parameters.at(key);
    if (v.is_null()) return std::nullopt;
    return param<std::vector<double>>(s, key);
}

perp_sim_config sim_config(const ExperimentSpec& s, std::uint64_t paths) {
    perp_sim_config cfg;
    perp_sim_config_init(&cfg);
    cfg.n_paths = paths;
    cfg.seed = s.seed;
    cfg.workers = s.workers;
    return cfg;
}

json cramer_json(const perp_cramer& c) {
    return json{{"alpha", c.alpha},
                {"m_alpha", c.m_alpha},
                {"sigma2_alpha", c.sigma2_alpha},
                {"drift", c.drift},
                {"is_signed", c.is_signed != 0},
                {"m_tilde", c.m_tilde},
                {"sigma2_tilde", c.sigma2_tilde},
                {"leading_constant", c.leading_constant},
                {"positive_fraction", c.positive_fraction},
                {"h_residual", c.h_residual}};
}

json estimate_json(const perp_estimate& e) {
    json j{{"value", e.value}, {"std_error", e.std_error}, {"n_samples", e.n_samples}};
    if (e.truncation_bound > 0.0) j["truncation_bound"] = e.truncation_bound;
    return j;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.5e", v);
    return buf;
}

json error_body(const std::string& status, const std::string& message) {
    return json{{"status", status}, {"message", message}};
}

std::string error_doc(const json& body) { return json{{"error", body}}.dump() + "\n"; }

struct Context {
    const ExperimentSpec& spec;
    const RunOptions& opts;
    std::string dump_spec() const { return spec_to_json(spec).dump(); }
    std::string comments() const {
        std::string c;
        if (opts.timestamp) c += "generated " + timestamp() + "\n";
        c += "spec " + dump_spec();
        return c;
    }
    std::string csv_header() const {
        std::string out;
        std::istringstream in(comments());
        for (std::string line; std::getline(in, line);) out += "# " + line + "\n";
        return out;
    }
};

// Result of one command before it is written anywhere.
struct Payload {
    json doc;
    std::string csv;  // empty when the command has no tabular output
    std::string svg;
    std::string summary;
};

ModelPtr load_model(const ExperimentSpec& s) {
    perp_model* m = nullptr;
    check(perp_model_from_json(s.model.dump().c_str(), &m));
    return ModelPtr(m);
}

EnsemblePtr load_ensemble(const ExperimentSpec& s) {
    perp_ensemble* e = nullptr;
    check(perp_ensemble_from_json(s.model.dump().c_str(), &e));
    return EnsemblePtr(e);
}

// A missing Cramér root is fine for commands that can run without one.
bool try_solve(const perp_model* m, perp_cramer* out) {
    perp_status st = perp_solve_alpha(m, nullptr, out);
    if (st == PERP_OK) return true;
    if (st == PERP_E_NO_ROOT) return false;
    throw ApiError{st, perp_last_error_json()};
}

Payload cmd_alpha(const Context& ctx) {
    auto model = load_model(ctx.spec);
    auto bracket = opt_vec(ctx.spec, "bracket");
    if (bracket && bracket->size() != 2) throw SpecError("parameter 'bracket' needs two values");
    perp_cramer c;
    check(perp_solve_alpha(model.get(), bracket ? bracket->data() : nullptr, &c));
    perp_conditions cond;
    check(perp_check_conditions(model.get(), &c, &cond));
    Payload p;
    p.doc = cramer_json(c);
    p.doc["conditions"] = json{{"finite_second_log_moment", cond.finite_second_log_moment != 0},
                               {"arithmetic", cond.arithmetic != 0},
                               {"lattice_span", cond.lattice_span},
                               {"degenerate", cond.degenerate != 0},
                               {"cramer_root", cond.cramer_root != 0}};
    p.csv = "alpha,m_alpha,sigma2_alpha,m_tilde,sigma2_tilde\n" + fmt(c.alpha) + "," + fmt(c.m_alpha) + "," +
            fmt(c.sigma2_alpha) + "," + fmt(c.m_tilde) + "," + fmt(c.sigma2_tilde) + "\n";
    p.summary = "alpha=" + fmt(c.alpha) + " m=" + fmt(c.m_alpha);
    return p;
}

int column_mask(const json& columns, bool log_gamma) {
    if (columns.is_null()) return PERP_COL_NORMAL | (log_gamma ? PERP_COL_TILTED : 0);
    int mask = 0;
    std::vector<std::string> names;
    try {
        names = columns.get<std::vector<std::string>>();
    } catch (const json::exception&) {
        throw SpecError("parameter 'columns' must be a list of names");
    }
    for (const auto& n : names) {
        if (n == "leading") continue;
        if (n == "normal")
            mask |= PERP_COL_NORMAL;
        else if (n == "tilted")
            mask |= PERP_COL_TILTED;
        else
            throw SpecError("unknown column '" + n + "' (leading, normal, tilted)");
    }
    return mask;
}

Payload curve_payload(const Context& ctx, int mask, const json& style) {
    const auto& s = ctx.spec;
    auto model = load_model(s);
    perp_cramer c;
    check(perp_solve_alpha(model.get(), nullptr, &c));
    perp_curve* raw = nullptr;
    check(perp_curve_build(model.get(), &c, param<double>(s, "logx_min"), param<double>(s, "logx_max"),
                           param<double>(s, "points_per_decade"), mask, &raw));
    CurvePtr curve(raw);
    Payload p;
    char* out = nullptr;
    check(perp_curve_json(curve.get(), &out));
    p.doc = json::parse(take(out));
    p.doc["cramer"] = cramer_json(c);
    check(perp_curve_csv(curve.get(), ctx.comments().c_str(), &out));
    p.csv = take(out);
    if (!s.output.svg.empty() || s.command == "fig2a") {
        std::string st = style.dump();
        check(perp_curve_svg(curve.get(), style.is_null() ? nullptr : st.c_str(), &out));
        p.svg = take(out);
    }
    p.summary = std::to_string(perp_curve_size(curve.get())) + " points, alpha=" + fmt(c.alpha);
    return p;
}

Payload cmd_tail(const Context& ctx) {
    bool log_gamma = ctx.spec.model.is_object() && ctx.spec.model.value("kind", "") == "log_gamma";
    int mask = column_mask(ctx.spec.parameters.at("columns"), log_gamma);
    json style;
    if ((mask & PERP_COL_NORMAL) && (mask & PERP_COL_TILTED))
        style = json{{"panels", {{"ratio_normal"}, {"ratio_tilted"}}}};
    else if (mask & PERP_COL_NORMAL)
        style = json{{"panels", {{"ratio_normal"}}}};
    else if (mask & PERP_COL_TILTED)
        style = json{{"panels", {{"ratio_tilted"}}}};
    else
        style = json{{"panels", {{"leading"}}}, {"y_label", "leading"}};
    return curve_payload(ctx, mask, style);
}

Payload cmd_fig2a(const Context& ctx) {
    json style{{"title", "ratio to the leading asymptotic"},
               {"panels", {{"ratio_normal"}, {"ratio_tilted"}}},
               {"panel_titles", {"normal approximation", "change of measure"}}};
    return curve_payload(ctx, PERP_COL_NORMAL | PERP_COL_TILTED, style);
}

Payload cmd_simulate_y(const Context& ctx) {
    const auto& s = ctx.spec;
    auto model = load_model(s);
    perp_cramer c;
    bool have = try_solve(model.get(), &c);
    auto cfg = sim_config(s, param<std::uint64_t>(s, "paths"));
    std::string mode = param<std::string>(s, "truncation");
    if (mode == "fixed") {
        cfg.truncation_fixed = 1;
        cfg.fixed_n = param<std::size_t>(s, "fixed_n");
    } else if (mode != "adaptive") {
        throw SpecError("parameter 'truncation' must be 'adaptive' or 'fixed'");
    }
    cfg.eps = param<double>(s, "eps");
    cfg.gamma = param<double>(s, "gamma");
    double logx = param<double>(s, "logx");
    perp_estimate up, lo;
    check(perp_simulate_y_tail(model.get(), have ? &c : nullptr, &cfg, logx, &up, &lo));
    Payload p;
    p.doc = estimate_json(up);
    p.doc["lower"] = estimate_json(lo);
    p.doc["log_x"] = logx;
    p.csv = "tail,value,std_error,n_samples\nupper," + fmt(up.value) + "," + fmt(up.std_error) + "," +
            std::to_string(up.n_samples) + "\nlower," + fmt(lo.value) + "," + fmt(lo.std_error) + "," +
            std::to_string(lo.n_samples) + "\n";
    p.summary = "P(Y>x)=" + fmt(up.value) + " +- " + fmt(up.std_error);
    return p;
}

Payload cmd_is_tail(const Context& ctx) {
    const auto& s = ctx.spec;
    auto model = load_model(s);
    perp_cramer c;
    check(perp_solve_alpha(model.get(), nullptr, &c));
    double logx = param<double>(s, "logx");
    perp_estimate e;
    char* per = nullptr;
    check(perp_is_tail_p(model.get(), &c, logx, param<std::uint64_t>(s, "samples_per_n"), s.seed, s.workers,
                         param<std::size_t>(s, "n_max"), &e, &per));
    json per_n = json::parse(take(per));
    Payload p;
    p.doc = estimate_json(e);
    p.doc["log_x"] = logx;
    p.doc["per_n"] = per_n;
    p.csv = "n,value,std_error,n_samples\n";
    for (const auto& r : per_n)
        p.csv += std::to_string(r.at("n").get<std::size_t>()) + "," + fmt(r.at("value").get<double>()) + "," +
                 fmt(r.at("std_error").get<double>()) + "," + std::to_string(r.at("n_samples").get<std::uint64_t>()) +
                 "\n";
    p.summary = "p(x)=" + fmt(e.value) + " +- " + fmt(e.std_error) + " over " + std::to_string(per_n.size()) + " rows";
    return p;
}

Payload cmd_ruin(const Context& ctx) {
    const auto& s = ctx.spec;
    auto model = load_model(s);
    perp_cramer c;
    bool have = try_solve(model.get(), &c);
    auto cfg = sim_config(s, param<std::uint64_t>(s, "paths"));
    double logx = param<double>(s, "logx");
    perp_estimate e;
    check(perp_simulate_ruin(model.get(), have ? &c : nullptr, logx, &cfg, param<bool>(s, "absolute") ? 1 : 0, &e));
    Payload p;
    p.doc = estimate_json(e);
    p.doc["log_x"] = logx;
    if (have) p.doc["scaled"] = e.value * std::exp(c.alpha * logx);
    p.csv = "log_x,value,std_error,n_samples\n" + fmt(logx) + "," + fmt(e.value) + "," + fmt(e.std_error) + "," +
            std::to_string(e.n_samples) + "\n";
    p.summary = "ruin=" + fmt(e.value) + " +- " + fmt(e.std_error);
    return p;
}

Payload cmd_lindley(const Context& ctx) {
    const auto& s = ctx.spec;
    auto model = load_model(s);
    auto u = param<std::vector<double>>(s, "u");
    if (u.empty()) throw SpecError("parameter 'u' must not be empty");
    auto cfg = sim_config(s, param<std::uint64_t>(s, "paths"));
    char* out = nullptr;
    check(perp_simulate_lindley(model.get(), param<std::size_t>(s, "steps"), &cfg, u.data(), u.size(), &out));
    json stats = json::parse(take(out));
    const json& first = stats.at("levels").at(0);
    Payload p;
    p.doc = json{{"value", first.at("rate")},
                 {"std_error", first.at("rate_se")},
                 {"n_samples", stats.at("n_paths")},
                 {"stats", stats}};
    p.csv = "u,exceedances,clusters,mean_cluster_size,rate,rate_se\n";
    for (const auto& l : stats.at("levels"))
        p.csv += fmt(l.at("u").get<double>()) + "," + std::to_string(l.at("exceedances").get<std::uint64_t>()) + "," +
                 std::to_string(l.at("clusters").get<std::uint64_t>()) + "," +
                 fmt(l.at("mean_cluster_size").get<double>()) + "," + fmt(l.at("rate").get<double>()) + "," +
                 fmt(l.at("rate_se").get<double>()) + "\n";
    p.summary = "exceedance rate above u=" + fmt(u[0]) + ": " + fmt(first.at("rate").get<double>());
    return p;
}

Payload cmd_goldie(const Context& ctx) {
    const auto& s = ctx.spec;
    auto model = load_model(s);
    perp_cramer c;
    check(perp_solve_alpha(model.get(), nullptr, &c));
    auto cfg = sim_config(s, param<std::uint64_t>(s, "paths"));
    perp_estimate e;
    check(perp_goldie_constant(model.get(), &c, &cfg, &e));
    Payload p;
    p.doc = estimate_json(e);
    p.doc["alpha"] = c.alpha;
    p.csv = "value,std_error,n_samples\n" + fmt(e.value) + "," + fmt(e.std_error) + "," + std::to_string(e.n_samples) + "\n";
    p.summary = "K=" + fmt(e.value) + " +- " + fmt(e.std_error);
    return p;
}

std::string mv_solve_json(const ExperimentSpec& s, const perp_ensemble* ens) {
    auto bracket = param<std::vector<double>>(s, "bracket");
    if (bracket.size() != 2) throw SpecError("parameter 'bracket' needs two values");
    char* out = nullptr;
    std::string method = param<std::string>(s, "method");
    if (method != "resampled" && method != "direct") throw SpecError("parameter 'method' must be resampled or direct");
    check(perp_mv_solve(ens, param<std::size_t>(s, "depth"), param<std::uint64_t>(s, "samples"), bracket[0], bracket[1],
                        method == "direct" ? PERP_MV_DIRECT : PERP_MV_RESAMPLED, s.seed, s.workers, &out));
    return take(out);
}

Payload cmd_mv_alpha(const Context& ctx) {
    auto ens = load_ensemble(ctx.spec);
    Payload p;
    p.doc = json::parse(mv_solve_json(ctx.spec, ens.get()));
    double a = p.doc.at("alpha").get<double>(), se = p.doc.at("alpha_se").get<double>();
    p.doc["value"] = a;
    p.doc["std_error"] = se;
    p.csv = "s,h,std_error\n";
    for (const auto& r : p.doc.at("h_curve"))
        p.csv += fmt(r.at("s").get<double>()) + "," + fmt(r.at("h").get<double>()) + "," +
                 fmt(r.at("std_error").get<double>()) + "\n";
    p.summary = "alpha=" + fmt(a) + " +- " + fmt(se);
    return p;
}

Payload cmd_mv_tail(const Context& ctx) {
    const auto& s = ctx.spec;
    auto ens = load_ensemble(s);
    std::size_t d = perp_ensemble_dim(ens.get());
    auto u = opt_vec(s, "u").value_or(std::vector<double>(d, 1.0 / std::sqrt(static_cast<double>(d))));
    std::vector<double> e1(d, 0.0);
    e1[0] = 1.0;
    auto v = opt_vec(s, "v").value_or(e1);
    if (u.size() != d || v.size() != d) throw SpecError("u and v must have length " + std::to_string(d));
    auto logx = param<std::vector<double>>(s, "logx");
    std::string mv = mv_solve_json(s, ens.get());
    auto cfg = sim_config(s, param<std::uint64_t>(s, "paths"));
    char* out = nullptr;
    check(perp_mv_tail(ens.get(), mv.c_str(), u.data(), v.data(), logx.data(), logx.size(), &cfg, &out));
    json res = json::parse(take(out));
    json mvj = json::parse(mv);
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) dot += u[i] * v[i];
    double alpha = mvj.at("alpha").get<double>();
    const json& last = res.at("points").back();
    Payload p;
    p.doc = json{{"value", last.at("ratio")},
                 {"std_error", last.at("ratio_se")},
                 {"n_samples", res.at("n_paths")},
                 {"target", dot > 0.0 ? std::pow(dot, alpha) : 0.0},
                 {"cramer", mvj},
                 {"tail", res}};
    p.csv = "log_x,p_u,se_u,p_uv,se_uv,ratio,ratio_se\n";
    for (const auto& r : res.at("points"))
        p.csv += fmt(r.at("log_x").get<double>()) + "," + fmt(r.at("p_u").get<double>()) + "," +
                 fmt(r.at("se_u").get<double>()) + "," + fmt(r.at("p_uv").get<double>()) + "," +
                 fmt(r.at("se_uv").get<double>()) + "," + fmt(r.at("ratio").get<double>()) + "," +
                 fmt(r.at("ratio_se").get<double>()) + "\n";
    p.summary = "ratio=" + fmt(last.at("ratio").get<double>()) + " +- " + fmt(last.at("ratio_se").get<double>());
    return p;
}

Payload dispatch(const Context& ctx) {
    const std::string& c = ctx.spec.command;
    if (c == "alpha") return cmd_alpha(ctx);
    if (c == "tail") return cmd_tail(ctx);
    if (c == "fig2a") return cmd_fig2a(ctx);
    if (c == "simulate-y") return cmd_simulate_y(ctx);
    if (c == "is-tail") return cmd_is_tail(ctx);
    if (c == "ruin") return cmd_ruin(ctx);
    if (c == "lindley") return cmd_lindley(ctx);
    if (c == "goldie") return cmd_goldie(ctx);
    if (c == "mv-alpha") return cmd_mv_alpha(ctx);
    if (c == "mv-tail") return cmd_mv_tail(ctx);
    throw SpecError("unknown command '" + c + "'");
}

}  // namespace

const std::vector<std::string>& commands() {
    static const std::vector<std::string> c{"alpha", "tail",  "simulate-y", "is-tail",  "ruin",
                                            "lindley", "goldie", "mv-alpha",  "mv-tail", "fig2a"};
    return c;
}

json spec_to_json(const ExperimentSpec& s) {
    return json{{"command", s.command},
                {"model", s.model},
                {"parameters", s.parameters},
                {"output", {{"json", s.output.json}, {"csv", s.output.csv}, {"svg", s.output.svg}}},
                {"seed", s.seed},
                {"workers", s.workers},
                {"format", s.format}};
}

ExperimentSpec spec_from_json(const json& j) {
    if (!j.is_object()) throw SpecError("spec must be a JSON object");
    static const std::vector<std::string> known{"command", "model", "parameters", "output", "seed", "workers", "format"};
    for (const auto& [k, _] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end()) throw SpecError("unknown spec field '" + k + "'");
    ExperimentSpec s;
    try {
        s.command = j.at("command").get<std::string>();
        if (j.contains("model")) s.model = j.at("model");
        if (j.contains("parameters")) s.parameters = j.at("parameters");
        if (j.contains("output")) {
            const json& o = j.at("output");
            s.output.json = o.value("json", "");
            s.output.csv = o.value("csv", "");
            s.output.svg = o.value("svg", "");
        }
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("workers")) s.workers = j.at("workers").get<unsigned>();
        if (j.contains("format")) s.format = j.at("format").get<std::string>();
    } catch (const json::exception& e) {
        throw SpecError(std::string("bad spec: ") + e.what());
    }
    return s;
}

ExperimentSpec spec_from_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SpecError(std::string("malformed spec JSON: ") + e.what(), "parse");
    }
    return spec_from_json(j);
}

ExperimentSpec resolve(ExperimentSpec s) {
    const json& defs = defaults_for(s.command);
    if (!s.parameters.is_object()) throw SpecError("'parameters' must be an object");
    for (const auto& [k, _] : s.parameters.items())
        if (!defs.contains(k)) throw SpecError("unknown parameter '" + k + "' for " + s.command);
    json merged = defs;
    merged.update(s.parameters);
    s.parameters = merged;
    if (s.command == "fig2a" && s.model.is_null())
        s.model = json{{"kind", "log_gamma"}, {"gamma", 4.0}, {"beta", 1.0}, {"mu", 5.0}};
    if (s.model.is_null()) throw SpecError("missing model descriptor");
    if (s.format != "json" && s.format != "csv") throw SpecError("format must be json or csv");
    if (s.workers == 0) throw SpecError("workers must be positive");
    return s;
}

void write_atomic(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw ApiError{PERP_E_IO, error_body("io", "cannot open " + tmp).dump()};
        f << content;
        f.flush();
        if (!f) {
            std::remove(tmp.c_str());
            throw ApiError{PERP_E_IO, error_body("io", "write failed for " + tmp).dump()};
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw ApiError{PERP_E_IO, error_body("io", "cannot rename onto " + path).dump()};
    }
}

unsigned default_workers() {
    const char* env = std::getenv("PERP_WORKERS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    unsigned long v = std::strtoul(env, &end, 10);
    if (*end != '\0' || v == 0 || v > 1024) return 1;
    return static_cast<unsigned>(v);
}

RunResult run(const ExperimentSpec& input, const RunOptions& opts) {
    RunResult r;
    try {
        ExperimentSpec spec = resolve(input);
        Context ctx{spec, opts};
        Payload p = dispatch(ctx);
        p.doc["config_echo"] = spec_to_json(spec);
        std::string json_text = p.doc.dump(2) + "\n";
        std::string csv_text = p.csv.empty() || spec.command == "tail" || spec.command == "fig2a"
                                   ? p.csv
                                   : ctx.csv_header() + p.csv;

        std::vector<std::string> wrote;
        if (!spec.output.json.empty()) {
            write_atomic(spec.output.json, json_text);
            wrote.push_back(spec.output.json);
        }
        if (!spec.output.csv.empty()) {
            write_atomic(spec.output.csv, csv_text);
            wrote.push_back(spec.output.csv);
        }
        if (!spec.output.svg.empty() && !p.svg.empty()) {
            write_atomic(spec.output.svg, p.svg);
            wrote.push_back(spec.output.svg);
        }

        if (wrote.empty()) {
            r.out = spec.format == "json" ? json_text : csv_text;
        } else {
            std::string line = spec.command + ": " + p.summary;
            for (const auto& w : wrote) line += " -> " + w;
            r.out = line + "\n";
        }
    } catch (const SpecError& e) {
        r.exit_code = 2;
        r.err = error_doc(error_body(e.status(), e.what()));
    } catch (const ApiError& e) {
        r.exit_code = perp_status_is_numerical(e.status) ? 3 : 2;
        json body;
        try {
            body = json::parse(e.detail);
        } catch (const json::parse_error&) {
            body = error_body(perp_status_name(e.status), e.detail);
        }
        r.err = error_doc(body);
    } catch (const json::exception& e) {
        r.exit_code = 3;
        r.err = error_doc(error_body("internal", e.what()));
    }
    return r;
}

}  // namespace perpcli
