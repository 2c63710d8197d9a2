#include "perp/json_io.hpp"

#include <set>
#include <variant>

#include "perp/errors.hpp"

namespace perp {

using nlohmann::json;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void bad(const std::string& what) { throw Error(Status::invalid_argument, what); }

void only_fields(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) bad(where + ": expected a JSON object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) bad(where + ": unknown field '" + k + "'");
}

double number(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) bad(where + ": missing field '" + key + "'");
    const json& v = j.at(key);
    if (!v.is_number()) bad(where + ": field '" + std::string(key) + "' must be a number");
    return v.get<double>();
}

json parse_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(Status::parse, std::string("malformed JSON: ") + e.what());
    }
}

std::vector<double> vec_of(const json& j) {
    if (!j.is_array()) bad("expected an array of numbers");
    std::vector<double> v;
    for (const auto& x : j) {
        if (!x.is_number()) bad("expected an array of numbers");
        v.push_back(x.get<double>());
    }
    return v;
}

}  // namespace

FactorModel model_from_json(const json& j, bool check_drift) {
    if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string()) bad("model: expected an object with a string 'kind'");
    const std::string kind = j.at("kind").get<std::string>();
    const std::string where = "model '" + kind + "'";
    if (kind == "log_normal") {
        only_fields(j, {"kind", "mu", "s"}, where);
        return FactorModel::log_normal(number(j, "mu", where), number(j, "s", where), check_drift);
    }
    if (kind == "gamma") {
        only_fields(j, {"kind", "gamma", "beta"}, where);
        return FactorModel::gamma(number(j, "gamma", where), number(j, "beta", where), check_drift);
    }
    if (kind == "log_gamma") {
        only_fields(j, {"kind", "gamma", "beta", "mu"}, where);
        return FactorModel::log_gamma(number(j, "gamma", where), number(j, "beta", where), number(j, "mu", where),
                                      check_drift);
    }
    if (kind == "two_point") {
        only_fields(j, {"kind", "a", "b", "p_a"}, where);
        return FactorModel::two_point(number(j, "a", where), number(j, "b", where), number(j, "p_a", where), check_drift);
    }
    if (kind == "signed_mixture") {
        only_fields(j, {"kind", "base", "q"}, where);
        if (!j.contains("base")) bad(where + ": missing field 'base'");
        // The base alone may have any drift; the mixture's drift is checked.
        FactorModel base = model_from_json(j.at("base"), false);
        return FactorModel::signed_mixture(base, number(j, "q", where), check_drift);
    }
    bad("model: unknown kind '" + kind + "'");
}

FactorModel model_from_string(const std::string& text) { return model_from_json(parse_text(text)); }

json model_to_json(const FactorModel& m) {
    return std::visit(Overloaded{[](const LogNormal& k) { return json{{"kind", "log_normal"}, {"mu", k.mu}, {"s", k.s}}; },
                                 [](const GammaFactor& k) { return json{{"kind", "gamma"}, {"gamma", k.gamma}, {"beta", k.beta}}; },
                                 [](const LogGamma& k) {
                                     return json{{"kind", "log_gamma"}, {"gamma", k.gamma}, {"beta", k.beta}, {"mu", k.mu}};
                                 },
                                 [](const TwoPoint& k) {
                                     return json{{"kind", "two_point"}, {"a", k.a}, {"b", k.b}, {"p_a", k.p_a}};
                                 },
                                 [](const SignedMixture& k) {
                                     return json{{"kind", "signed_mixture"}, {"base", model_to_json(*k.base)}, {"q", k.q}};
                                 }},
                      m.kind());
}

MatrixEnsemble ensemble_from_json(const json& j) {
    only_fields(j, {"d", "entries", "atoms", "dense_subgroup_assumed"}, "ensemble");
    bool dense = false;
    if (j.contains("dense_subgroup_assumed")) {
        if (!j.at("dense_subgroup_assumed").is_boolean()) bad("ensemble: dense_subgroup_assumed must be a boolean");
        dense = j.at("dense_subgroup_assumed").get<bool>();
    }
    if (j.contains("entries") == j.contains("atoms")) bad("ensemble: exactly one of 'entries' or 'atoms' is required");
    std::optional<std::size_t> d;
    if (j.contains("d")) {
        if (!j.at("d").is_number_integer() || j.at("d").get<long>() < 2) bad("ensemble: d must be an integer >= 2");
        d = j.at("d").get<std::size_t>();
    }
    auto check_dim = [&](std::size_t n) {
        if (d && *d != n) bad("ensemble: d does not match the matrix size");
    };
    if (j.contains("entries")) {
        if (!d) bad("ensemble: 'd' is required with 'entries'");
        const json& rows = j.at("entries");
        if (!rows.is_array()) bad("ensemble: entries must be an array of rows");
        check_dim(rows.size());
        std::vector<std::vector<EntrySpec>> grid;
        for (const auto& row : rows) {
            if (!row.is_array()) bad("ensemble: entries must be an array of rows");
            std::vector<EntrySpec> r;
            for (const auto& e : row) {
                if (e.is_number()) {
                    r.emplace_back(e.get<double>());
                } else {
                    r.emplace_back(model_from_json(e, false));
                }
            }
            grid.push_back(std::move(r));
        }
        MatrixEnsemble ens = MatrixEnsemble::from_entries(grid);
        ens.dense_subgroup_assumed = dense;
        return ens;
    }
    const json& atoms = j.at("atoms");
    if (!atoms.is_array() || atoms.empty()) bad("ensemble: atoms must be a nonempty array");
    std::vector<MatrixAtom> out;
    for (const auto& a : atoms) {
        only_fields(a, {"matrix", "prob"}, "ensemble atom");
        if (!a.contains("matrix") || !a.at("matrix").is_array()) bad("ensemble atom: missing 'matrix'");
        const json& rows = a.at("matrix");
        const auto n = static_cast<Eigen::Index>(rows.size());
        if (n < 2 || n > kMaxDim) bad("ensemble atom: dimension must lie in [2, 8]");
        check_dim(rows.size());
        Mat m(n, n);
        for (Eigen::Index r = 0; r < n; ++r) {
            std::vector<double> row = vec_of(rows.at(static_cast<std::size_t>(r)));
            if (static_cast<Eigen::Index>(row.size()) != n) bad("ensemble atom: matrix must be square");
            for (Eigen::Index c = 0; c < n; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
        }
        out.push_back(MatrixAtom{m, number(a, "prob", "ensemble atom")});
    }
    MatrixEnsemble ens = MatrixEnsemble::from_atoms(out);
    ens.dense_subgroup_assumed = dense;
    return ens;
}

MatrixEnsemble ensemble_from_string(const std::string& text) { return ensemble_from_json(parse_text(text)); }

json ensemble_to_json(const MatrixEnsemble& e) {
    json j;
    j["d"] = e.dim();
    if (!e.atoms().empty()) {
        json atoms = json::array();
        for (const auto& a : e.atoms()) {
            json rows = json::array();
            for (Eigen::Index r = 0; r < a.matrix.rows(); ++r) {
                json row = json::array();
                for (Eigen::Index c = 0; c < a.matrix.cols(); ++c) row.push_back(a.matrix(r, c) * e.scale());
                rows.push_back(row);
            }
            atoms.push_back(json{{"matrix", rows}, {"prob", a.prob}});
        }
        j["atoms"] = atoms;
    } else {
        if (e.scale() != 1.0) throw Error(Status::unsupported, "rescaled model-entry ensembles have no descriptor form");
        json rows = json::array();
        for (const auto& row : e.entries()) {
            json r = json::array();
            for (const auto& x : row) {
                if (const double* c = std::get_if<double>(&x)) {
                    r.push_back(*c);
                } else {
                    r.push_back(model_to_json(std::get<FactorModel>(x)));
                }
            }
            rows.push_back(r);
        }
        j["entries"] = rows;
    }
    j["dense_subgroup_assumed"] = e.dense_subgroup_assumed;
    return j;
}

json to_json(const CramerSolution& s) {
    return json{{"alpha", s.alpha},
                {"m_alpha", s.m_alpha},
                {"sigma2_alpha", s.sigma2_alpha},
                {"drift", s.drift},
                {"signed", s.is_signed},
                {"m_tilde", s.m_tilde},
                {"sigma2_tilde", s.sigma2_tilde},
                {"leading_constant", s.leading_constant},
                {"positive_fraction", s.positive_fraction},
                {"h_residual", s.h_residual}};
}

CramerSolution cramer_from_json(const json& j) {
    CramerSolution s;
    s.alpha = j.at("alpha").get<double>();
    s.m_alpha = j.at("m_alpha").get<double>();
    s.sigma2_alpha = j.at("sigma2_alpha").get<double>();
    s.drift = j.at("drift").get<double>();
    s.is_signed = j.at("signed").get<bool>();
    s.m_tilde = j.at("m_tilde").get<double>();
    s.sigma2_tilde = j.at("sigma2_tilde").get<double>();
    s.leading_constant = j.at("leading_constant").get<double>();
    s.positive_fraction = j.at("positive_fraction").get<double>();
    s.h_residual = j.at("h_residual").get<double>();
    return s;
}

json to_json(const ConditionReport& r) {
    return json{{"finite_second_log_moment", r.finite_second_log_moment},
                {"arithmetic", r.arithmetic},
                {"lattice_span", r.lattice_span},
                {"degenerate", r.degenerate},
                {"cramer_root", r.cramer_root}};
}

json to_json(const TiltedEstimate& e) {
    json j{{"value", e.value}, {"std_error", e.std_error}, {"n_samples", e.n_samples}, {"truncation_bound", e.truncation_bound}};
    if (!e.per_n.empty()) {
        json per = json::array();
        for (const auto& p : e.per_n)
            per.push_back(json{{"n", p.n}, {"value", p.value}, {"std_error", p.std_error}, {"n_samples", p.n_samples}});
        j["per_n"] = per;
    }
    return j;
}

json to_json(const Estimate& e) { return json{{"value", e.value}, {"std_error", e.std_error}, {"n_samples", e.n_samples}}; }

json to_json(const LindleyStats& s) {
    json levels = json::array();
    for (const auto& l : s.levels)
        levels.push_back(json{{"u", l.u}, {"exceedances", l.exceedances}, {"clusters", l.clusters}, {"mean_cluster_size", l.mean_cluster_size},
                              {"rate", l.rate}, {"rate_se", l.rate_se}});
    return json{{"n_paths", s.n_paths},   {"n_steps", s.n_steps},     {"zero_hits", s.zero_hits},
                {"min_value", s.min_value}, {"max_value", s.max_value}, {"levels", levels}};
}

json to_json(const MultivariateCramer& mv) {
    json curve = json::array();
    for (const auto& p : mv.h_curve)
        curve.push_back(json{{"s", p.s}, {"h", p.h}, {"std_error", p.std_error}, {"log_moment_short", p.log_moment_short}});
    return json{{"method", mv_method_name(mv.method)}, {"alpha", mv.alpha}, {"alpha_se", mv.alpha_se}, {"alpha_depth_error", mv.alpha_depth_error},       {"m_alpha", mv.m_alpha},
                {"m_alpha_se", mv.m_alpha_se}, {"lyapunov", mv.lyapunov},       {"lyapunov_se", mv.lyapunov_se},
                {"n_products", mv.n_products}, {"n_samples", mv.n_samples},     {"h_curve", curve}};
}

MultivariateCramer mv_cramer_from_json(const json& j) {
    MultivariateCramer mv;
    if (j.contains("method")) mv.method = mv_method_from_name(j.at("method").get<std::string>());
    mv.alpha = j.at("alpha").get<double>();
    mv.alpha_se = j.at("alpha_se").get<double>();
    mv.alpha_depth_error = j.value("alpha_depth_error", 0.0);
    mv.m_alpha = j.at("m_alpha").get<double>();
    mv.m_alpha_se = j.at("m_alpha_se").get<double>();
    mv.lyapunov = j.at("lyapunov").get<double>();
    mv.lyapunov_se = j.at("lyapunov_se").get<double>();
    mv.n_products = j.at("n_products").get<std::size_t>();
    mv.n_samples = j.at("n_samples").get<std::uint64_t>();
    for (const auto& p : j.at("h_curve"))
        mv.h_curve.push_back(HCurvePoint{p.at("s").get<double>(), p.at("h").get<double>(), p.at("std_error").get<double>(),
                                         p.at("log_moment_short").get<double>()});
    return mv;
}

json to_json(const MvTailResult& r) {
    json pts = json::array();
    for (const auto& p : r.points)
        pts.push_back(json{{"log_x", p.log_x}, {"p_u", p.p_u},     {"se_u", p.se_u},         {"p_uv", p.p_uv},
                           {"se_uv", p.se_uv}, {"ratio", p.ratio}, {"ratio_se", p.ratio_se}, {"hits_u", p.hits_u},
                           {"hits_uv", p.hits_uv}});
    return json{{"n_max", r.n_max}, {"n_paths", r.n_paths}, {"points", pts}};
}

json to_json(const TailCurve& c) {
    json j{{"log_x", c.log_x}, {"leading", c.leading}, {"labels", c.labels}};
    if (c.normal_approx) {
        j["normal_approx"] = *c.normal_approx;
        j["ratio_normal"] = c.ratio_normal();
    }
    if (c.tilted_exact) {
        j["tilted_exact"] = *c.tilted_exact;
        j["ratio_tilted"] = c.ratio_tilted();
    }
    return j;
}

}  // namespace perp
