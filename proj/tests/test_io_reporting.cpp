#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "perp/cramer_solver.hpp"
#include "perp/errors.hpp"
#include "perp/json_io.hpp"
#include "perp/reporting.hpp"
#include "perp/tail_engine.hpp"

using namespace perp;
using nlohmann::json;

namespace {

Status status_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.status();
    }
    return Status::ok;
}

TailCurve fig_curve(double lo = 20.0, double hi = 100.0, double ppd = 10.0) {
    auto m = FactorModel::log_gamma(4.0, 1.0, 5.0);
    return build_tail_curve(m, solve_alpha(m), CurveOptions{lo, hi, ppd, true, true});
}

std::size_t count(const std::string& s, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
    return n;
}

}  // namespace

TEST(ModelJson, RoundTrip) {
    std::vector<std::string> docs{
        R"({"kind":"log_normal","mu":-1,"s":1})",
        R"({"kind":"gamma","gamma":2,"beta":4})",
        R"({"kind":"log_gamma","gamma":4,"beta":1,"mu":5})",
        R"({"kind":"two_point","a":2,"b":0.5,"p_a":0.3333333333333333})",
        R"({"kind":"signed_mixture","base":{"kind":"two_point","a":2,"b":0.5,"p_a":0.3333333333333333},"q":0.4})",
    };
    for (const auto& d : docs) {
        auto m = model_from_string(d);
        auto j = model_to_json(m);
        auto m2 = model_from_json(j);
        EXPECT_EQ(model_to_json(m2), j) << d;
        EXPECT_DOUBLE_EQ(m2.h(0.3), m.h(0.3));
    }
}

TEST(ModelJson, Rejections) {
    EXPECT_EQ(status_of([] { model_from_string("{not json"); }), Status::parse);
    EXPECT_EQ(status_of([] { model_from_string(R"({"kind":"cauchy"})"); }), Status::invalid_argument);
    EXPECT_EQ(status_of([] { model_from_string(R"({"kind":"log_normal","mu":-1,"s":1,"extra":3})"); }),
              Status::invalid_argument);
    EXPECT_EQ(status_of([] { model_from_string(R"({"kind":"log_normal","mu":-1})"); }), Status::invalid_argument);
    EXPECT_EQ(status_of([] { model_from_string(R"({"kind":"log_normal","mu":"x","s":1})"); }), Status::invalid_argument);
}

TEST(EnsembleJson, EntriesAndAtoms) {
    auto e = ensemble_from_string(
        R"({"d":2,"entries":[[{"kind":"log_normal","mu":-1.5,"s":1},0.2],[0.2,{"kind":"log_normal","mu":-1.5,"s":1}]]})");
    EXPECT_EQ(e.dim(), 2u);
    auto j = ensemble_to_json(e);
    EXPECT_EQ(ensemble_to_json(ensemble_from_json(j)), j);
    auto a = ensemble_from_string(R"({"atoms":[{"matrix":[[0.5,0],[0,2]],"prob":0.5},{"matrix":[[1,1],[0,0.3]],"prob":0.5}]})");
    EXPECT_EQ(a.atoms().size(), 2u);
    EXPECT_EQ(ensemble_to_json(ensemble_from_json(ensemble_to_json(a))), ensemble_to_json(a));
    // Entry models may have positive drift; the ensemble as a whole is what must contract.
    EXPECT_NO_THROW(ensemble_from_string(R"({"d":2,"entries":[[{"kind":"log_normal","mu":0.5,"s":1},0],[0,1]]})"));
    EXPECT_EQ(status_of([] { ensemble_from_string(R"({"d":3,"entries":[[1,0],[0,1]]})"); }), Status::invalid_argument);
}

TEST(CramerJson, RoundTrip) {
    auto sol = solve_alpha(FactorModel::signed_mixture(FactorModel::log_normal(-1.0, 1.0), 0.3));
    auto back = cramer_from_json(to_json(sol));
    EXPECT_EQ(to_json(back), to_json(sol));
}

TEST(Csv, GoldenSchema) {
    auto csv = tail_curve_csv(fig_curve(20.0, 30.0, 5.0), {"generated now", "seed 1"});
    EXPECT_EQ(csv.rfind("# generated now\n# seed 1\n", 0), 0u);
    auto header_pos = csv.find("log_x,");
    ASSERT_NE(header_pos, std::string::npos);
    std::string header = csv.substr(header_pos, csv.find('\n', header_pos) - header_pos);
    EXPECT_EQ(header, "log_x,leading,normal_approx,tilted_exact,ratio_normal,ratio_tilted");
    std::string expected;
    for (std::size_t i = 0; i < kTailCsvColumns.size(); ++i) expected += (i ? "," : "") + kTailCsvColumns[i];
    EXPECT_EQ(header, expected);
}

TEST(Csv, MissingColumnsStayEmpty) {
    auto ln = FactorModel::log_normal(-1.0, 1.0);
    auto c = build_tail_curve(ln, solve_alpha(ln), CurveOptions{2.0, 3.0, 5.0, true, false});
    auto csv = tail_curve_csv(c);
    auto first_row = csv.substr(csv.find('\n') + 1);
    first_row = first_row.substr(0, first_row.find('\n'));
    EXPECT_EQ(count(first_row, ","), 5u);
    EXPECT_EQ(first_row.substr(first_row.size() - 1), ",");
}

TEST(Csv, SixSignificantDigits) {
    EXPECT_EQ(format_sci(1.0), "1.00000e+00");
    EXPECT_EQ(format_sci(0.0123456789), "1.23457e-02");
    EXPECT_EQ(format_sci(std::nan("")), "");
}

TEST(Svg, DeterministicAndLabelled) {
    auto c = fig_curve();
    PlotStyle st;
    st.panels = {{"ratio_normal"}, {"ratio_tilted"}};
    st.panel_titles = {"normal", "tilted"};
    auto a = emit_plot(c, st), b = emit_plot(fig_curve(), st);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.rfind("<svg", 0), 0u);
    EXPECT_NE(a.find(">log x<"), std::string::npos);
    EXPECT_NE(a.find(">ratio<"), std::string::npos);
    EXPECT_EQ(count(a, "<polyline"), 2u);
    EXPECT_EQ(count(a, "class=\"panel\""), 2u);
    EXPECT_NE(a.find("ratio_normal"), std::string::npos);  // legend
}

TEST(Svg, SinglePointGetsMarker) {
    auto c = fig_curve(50.0, 50.0);
    ASSERT_EQ(c.size(), 1u);
    auto s = emit_plot(c);
    EXPECT_EQ(count(s, "<polyline"), 0u);
    EXPECT_GE(count(s, "<circle"), 2u);
}

TEST(Svg, EmptyCurveIsAnError) {
    TailCurve empty;
    EXPECT_THROW(emit_plot(empty), Error);
    PlotStyle st;
    st.panels = {{"no_such_column"}};
    EXPECT_THROW(emit_plot(fig_curve(), st), Error);
}
