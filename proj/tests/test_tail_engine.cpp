#include <cmath>

#include <gtest/gtest.h>

#include "perp/cramer_solver.hpp"
#include "perp/errors.hpp"
#include "perp/tail_engine.hpp"

using namespace perp;

namespace {

FactorModel fig_model() { return FactorModel::log_gamma(4.0, 1.0, 5.0); }

// Values of x^alpha p(x) and p(x) / leading(x) for LogGamma(4, 1, 5), summed term by term in
// 40-digit arithmetic from the regularized upper incomplete gamma function.
constexpr double kScaled20 = 1.9755253080466139;
constexpr double kScaled30 = 1.9755252725016004;
constexpr double kRenewalLimit = 1.9755252725596931169;
constexpr double kRatio20 = 0.06731827220725463;
constexpr double kRatio60 = 0.022439423665999145;
constexpr double kRatio100 = 0.013463654199599487;

}  // namespace

TEST(Leading, Formula) {
    auto sol = solve_alpha(FactorModel::log_normal(-1.0, 1.0));
    for (double L : {1.0, 5.0, 30.0}) EXPECT_NEAR(leading_tail(sol, L), 2.0 * L * std::exp(-2.0 * L), 1e-15);
    EXPECT_THROW(leading_tail(sol, 0.0), Error);
    EXPECT_THROW(leading_tail(sol, -1.0), Error);
}

TEST(Renewal, LimitConstant) {
    auto sol = solve_alpha(fig_model());
    EXPECT_NEAR(renewal_tail(sol, 40.0) * std::exp(sol.alpha * 40.0), kRenewalLimit, 1e-10);
}

TEST(NormalApprox, LogNormalSumAgainstDirectSum) {
    auto sol = solve_alpha(FactorModel::log_normal(-1.0, 1.0));
    // sum_{n <= 20} Phi((20 - n)/sqrt(n)) / 20
    EXPECT_NEAR(normal_approx_tail(sol, 20.0) / leading_tail(sol, 20.0), 0.9093201946267319723, 1e-12);
}

TEST(NormalApprox, Errors) {
    auto sol = solve_alpha(fig_model());
    try {
        normal_approx_tail(sol, 1.0);  // below m_tilde
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.status(), Status::domain);
    }
    CramerSolution flat = sol;
    flat.sigma2_tilde = 0.0;
    try {
        normal_approx_tail(flat, 20.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.status(), Status::unsupported);
    }
}

TEST(TiltedExact, LogGammaAgainstHighPrecision) {
    auto m = fig_model();
    auto sol = solve_alpha(m);
    EXPECT_NEAR(tilted_exact_tail(m, sol, 20.0) * std::exp(sol.alpha * 20.0), kScaled20, 1e-9);
    EXPECT_NEAR(tilted_exact_tail(m, sol, 30.0) * std::exp(sol.alpha * 30.0), kScaled30, 1e-9);
    EXPECT_NEAR(tilted_exact_tail(m, sol, 20.0) / leading_tail(sol, 20.0), kRatio20, 1e-11);
    EXPECT_NEAR(tilted_exact_tail(m, sol, 60.0) / leading_tail(sol, 60.0), kRatio60, 1e-11);
    EXPECT_NEAR(tilted_exact_tail(m, sol, 100.0) / leading_tail(sol, 100.0), kRatio100, 1e-11);
}

TEST(TiltedExact, ApproachesRenewalLimit) {
    auto m = fig_model();
    auto sol = solve_alpha(m);
    for (double L : {40.0, 60.0, 80.0})
        EXPECT_NEAR(tilted_exact_tail(m, sol, L) / renewal_tail(sol, L), 1.0, 1e-8) << L;
}

TEST(TiltedExact, TruncationReportsPartialSum) {
    auto m = fig_model();
    auto sol = solve_alpha(m);
    try {
        tilted_exact_tail(m, sol, 20.0, 3);
        FAIL();
    } catch (const TruncationError& e) {
        EXPECT_GT(e.partial_sum(), 0.0);
        EXPECT_GT(e.bound(), 0.01 * e.partial_sum());
    }
}

TEST(TiltedExact, OnlyLogGamma) {
    auto ln = FactorModel::log_normal(-1.0, 1.0);
    auto sol = solve_alpha(ln);
    try {
        tilted_exact_tail(ln, sol, 10.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.status(), Status::unsupported);
    }
}

TEST(Horizon, FloorOfScaledLog) {
    auto sol = solve_alpha(FactorModel::log_normal(-1.0, 1.0));
    EXPECT_EQ(horizon(sol, 10.0, 0.5).n_max, 15u);
    EXPECT_EQ(horizon(sol, 10.0, 0.0).n_max, 10u);
    EXPECT_EQ(horizon(sol, 0.4, 0.0).n_max, 0u);
}

TEST(Horizon, AdaptiveMeetsTolerance) {
    auto m = fig_model();
    auto sol = solve_alpha(m);
    for (double L : {20.0, 30.0, 60.0}) {
        std::size_t n = adaptive_horizon(m, sol, L, 1e-6);
        EXPECT_GE(n, horizon(sol, L, 0.5).n_max);
        EXPECT_LE(markov_remainder(m, sol, L, n), 1e-6 * renewal_tail(sol, L) * (1 + 1e-9));
        if (n > 1) EXPECT_GT(markov_remainder(m, sol, L, n - 1), 0.0);
    }
}

TEST(Kesten, Ratio) {
    auto sol = solve_alpha(FactorModel::log_normal(-1.0, 1.0));
    EXPECT_NEAR(kesten_ratio(sol, 4.0, 10.0), 10.0, 1e-14);
    EXPECT_THROW(kesten_ratio(sol, 0.0, 10.0), Error);
}

TEST(Curve, GridIsUniformInLogLog) {
    auto g = log_uniform_grid(20.0, 100.0, 50.0);
    ASSERT_GE(g.size(), 3u);
    EXPECT_DOUBLE_EQ(g.front(), 20.0);
    EXPECT_DOUBLE_EQ(g.back(), 100.0);
    double step = std::log(g[1]) - std::log(g[0]);
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(std::log(g[i]) - std::log(g[i - 1]), step, 1e-12);
    EXPECT_EQ(log_uniform_grid(7.0, 7.0, 50.0).size(), 1u);
    EXPECT_THROW(log_uniform_grid(0.0, 10.0, 50.0), Error);
}

TEST(Curve, Columns) {
    auto m = fig_model();
    auto sol = solve_alpha(m);
    auto c = build_tail_curve(m, sol, CurveOptions{20.0, 100.0, 10.0, true, true});
    ASSERT_TRUE(c.normal_approx && c.tilted_exact);
    auto rt = c.ratio_tilted();
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_NEAR(rt[i], (*c.tilted_exact)[i] / c.leading[i], 1e-15);
        EXPECT_GT((*c.normal_approx)[i], 0.0);
    }
    // Non-LogGamma models have no tilted column.
    auto ln = FactorModel::log_normal(-1.0, 1.0);
    EXPECT_THROW(build_tail_curve(ln, solve_alpha(ln), CurveOptions{}), Error);
    auto c2 = build_tail_curve(ln, solve_alpha(ln), CurveOptions{0.5, 5.0, 10.0, true, false});
    EXPECT_TRUE(std::isnan(c2.ratio_normal().front()));  // below m_tilde
    EXPECT_FALSE(c2.tilted_exact.has_value());
}

// x^alpha p(x) decreases to its limit for the gamma-driven example; the ratio to the leading term
// therefore falls like 1 / log x instead of approaching 1.
TEST(Property, TiltedRatioScalesLikeInverseLog) {
    auto m = fig_model();
    auto sol = solve_alpha(m);
    for (double L : {40.0, 60.0, 80.0, 100.0}) {
        double r = tilted_exact_tail(m, sol, L) / leading_tail(sol, L);
        EXPECT_NEAR(r * L, kRenewalLimit / sol.leading_constant, 1e-6) << L;
    }
}
