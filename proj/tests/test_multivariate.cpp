#include <cmath>

#include <gtest/gtest.h>

#include "perp/errors.hpp"
#include "perp/mc_engine.hpp"
#include "perp/multivariate.hpp"
#include "perp/parallel.hpp"

using namespace perp;

namespace {

FactorModel tp() { return FactorModel::two_point(2.0, 0.5, 1.0 / 3.0); }

MatrixEnsemble diagonal_tp() { return MatrixEnsemble::from_entries({{tp(), 0.0}, {0.0, tp()}}); }

Mat mat2(double a, double b, double c, double d) {
    Mat m(2, 2);
    m << a, b, c, d;
    return m;
}

}  // namespace

TEST(OperatorNorm, LargestSingularValue) {
    EXPECT_NEAR(operator_norm(mat2(3.0, 0.0, 0.0, 2.0)), 3.0, 1e-10);
    EXPECT_NEAR(operator_norm(mat2(1.0, 1.0, 0.0, 1.0)), (1.0 + std::sqrt(5.0)) / 2.0, 1e-9);
    Mat r(3, 3);
    r << 1, 2, 0, 0, 1, 3, 4, 0, 1;
    Eigen::MatrixXd dense = r;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(dense);
    EXPECT_NEAR(operator_norm(r), svd.singularValues()(0), 1e-9 * svd.singularValues()(0));
    EXPECT_EQ(operator_norm(mat2(0, 0, 0, 0)), 0.0);
}

TEST(Ensemble, Validation) {
    EXPECT_THROW(MatrixEnsemble::from_entries({{1.0}}), Error);
    EXPECT_THROW(MatrixEnsemble::from_entries({{1.0, 0.0}, {0.0, 0.0}}), Error);  // zero row
    EXPECT_THROW(MatrixEnsemble::from_entries({{1.0, -1.0}, {0.0, 1.0}}), Error);
    EXPECT_THROW(MatrixEnsemble::from_entries({{FactorModel::signed_mixture(tp(), 0.5), 0.0}, {0.0, 1.0}}), Error);
    EXPECT_THROW(MatrixEnsemble::from_atoms({{mat2(1, 0, 0, 1), 0.5}}), Error);  // probabilities
    EXPECT_THROW(MatrixEnsemble::from_atoms({{mat2(1, 0, 0, 0), 1.0}}), Error);
    auto e = MatrixEnsemble::from_atoms({{mat2(1, 0, 0, 1), 0.25}, {mat2(0, 1, 1, 0), 0.75}});
    EXPECT_EQ(e.dim(), 2u);
    EXPECT_THROW(e.scaled(0.0), Error);
}

TEST(EstimateH, DeterministicScaledIdentity) {
    // Every product is 0.5^n I, so h(s) = 0.5^s exactly with zero spread.
    auto e = MatrixEnsemble::from_atoms({{mat2(0.5, 0, 0, 0.5), 1.0}});
    auto h = estimate_h(e, 2.0, 10, 100, 1);
    EXPECT_NEAR(h.value, 0.25, 1e-12);
    EXPECT_NEAR(h.std_error, 0.0, 1e-12);
    EXPECT_EQ(estimate_h(e, 0.0, 10, 100, 1).value, 1.0);
    EXPECT_THROW(estimate_h(e, -1.0, 10, 100, 1), Error);
}

TEST(EstimateH, DiagonalTwoPoint) {
    // The norm of a diagonal product is the larger of two independent scalar products; E max^s
    // lies between h^n and 2 h^n.
    auto e = diagonal_tp();
    const std::size_t depth = 12;
    for (double s : {0.5, 1.0}) {
        auto h = estimate_h(e, s, depth, 100000, 2);
        double scalar = tp().h(s);
        EXPECT_GE(h.value, scalar - 4 * h.std_error);
        EXPECT_LE(h.value, scalar * std::pow(2.0, 1.0 / depth) + 4 * h.std_error);
    }
}

TEST(EstimateH, LogConvexInS) {
    auto e = MatrixEnsemble::from_entries({{FactorModel::log_normal(-1.5, 1.0, false), FactorModel::log_normal(-1.5, 1.0, false)},
                                           {FactorModel::log_normal(-1.5, 1.0, false), FactorModel::log_normal(-1.5, 1.0, false)}});
    std::vector<double> s{0.2, 0.6, 1.0};
    std::vector<HEstimate> h;
    for (double v : s) h.push_back(estimate_h(e, v, 8, 40000, 3));
    double chord = 0.5 * (std::log(h[0].value) + std::log(h[2].value));
    double se = h[1].std_error / h[1].value + 0.5 * (h[0].std_error / h[0].value + h[2].std_error / h[2].value);
    EXPECT_LE(std::log(h[1].value), chord + 3 * se);
}

TEST(Lyapunov, NegativeForContractingEnsemble) {
    auto e = diagonal_tp();
    auto g = estimate_lyapunov(e, 16, 20000, 4);
    // Scalar drift is -ln 2 / 3.
    EXPECT_LT(g.gamma, 0.0);
    EXPECT_NEAR(g.gamma, -std::log(2.0) / 3.0, 0.05);
    EXPECT_GE(g.depth, 16u);
}

TEST(Lyapunov, ShiftsByLogOfScale) {
    auto ln = FactorModel::log_normal(-1.5, 1.0, false);
    auto e = MatrixEnsemble::from_entries({{ln, ln}, {ln, ln}});
    auto g = estimate_lyapunov(e, 16, 20000, 6);
    auto gc = estimate_lyapunov(e.scaled(0.5), 16, 20000, 6);
    EXPECT_NEAR(gc.gamma, g.gamma + std::log(0.5), 3 * std::hypot(g.std_error, gc.std_error));
}

// gamma < 0 exactly when h falls just right of s = 0; a positive gamma is rejected outright.
TEST(Lyapunov, SignMatchesSlopeOfH) {
    auto ln = FactorModel::log_normal(-1.5, 1.0, false);
    auto e = MatrixEnsemble::from_entries({{ln, ln}, {ln, ln}});
    auto g = estimate_lyapunov(e, 16, 20000, 7);
    auto h = estimate_h(e, 0.05, 16, 20000, 7);
    EXPECT_LT(g.gamma, -3 * g.std_error);
    EXPECT_LT(h.value, 1.0 - 3 * h.std_error);
    auto up = e.scaled(4.0);
    EXPECT_THROW(estimate_lyapunov(up, 16, 20000, 7), Error);
    auto hu = estimate_h(up, 0.05, 16, 20000, 7);
    EXPECT_GT(hu.value, 1.0 + 3 * hu.std_error);
}

TEST(Lyapunov, ExpandingEnsembleIsRejected) {
    auto e = MatrixEnsemble::from_atoms({{mat2(2, 0, 0, 2), 1.0}});
    EXPECT_THROW(estimate_lyapunov(e, 8, 1000, 1), Error);
}

TEST(SolveMv, DiagonalTwoPointRecoversScalarAlpha) {
    MvSolveOptions o;
    o.depth = 30;
    o.n_samples = 20000;
    o.seed = 9;
    auto mv = solve_alpha_mv(diagonal_tp(), o);
    EXPECT_EQ(mv.method, MvMethod::resampled);
    EXPECT_NEAR(mv.alpha, 1.0, 4 * mv.alpha_se + mv.alpha_depth_error);
    EXPECT_NEAR(mv.m_alpha, std::log(2.0) / 3.0, 4 * mv.m_alpha_se + 0.01);
    EXPECT_GE(mv.n_products, 60u);  // the reducible case always needs a doubling
    EXPECT_EQ(mv.h_curve.size(), 21u);
    EXPECT_LT(mv.lyapunov, 0.0);
}

TEST(SolveMv, LogNormalEntriesAgainstTransferOperator) {
    // Perron root of the direction transfer operator by 4-d Gauss-Hermite quadrature on a 300-point
    // angle grid (converged to 1e-5 between grids).
    const double alpha = 2.26459, m = 0.67829, gamma = -0.49177;
    auto ln = FactorModel::log_normal(-1.5, 1.0, false);
    MvSolveOptions o;
    o.depth = 30;
    o.n_samples = 50000;
    o.seed = 11;
    auto mv = solve_alpha_mv(MatrixEnsemble::from_entries({{ln, ln}, {ln, ln}}), o);
    EXPECT_NEAR(mv.alpha, alpha, 4 * mv.alpha_se + mv.alpha_depth_error);
    EXPECT_NEAR(mv.m_alpha, m, 4 * mv.m_alpha_se);
    EXPECT_NEAR(mv.lyapunov, gamma, 4 * mv.lyapunov_se + 1e-3);
}

TEST(SolveMv, DirectMethodOnScaledIdentities) {
    // ||Pi'_n|| is exactly the scalar product, so E||Pi'_n||^s = h(s)^n with no prefactor.
    auto e = MatrixEnsemble::from_atoms({{mat2(2, 0, 0, 2), 1.0 / 3.0}, {mat2(0.5, 0, 0, 0.5), 2.0 / 3.0}});
    MvSolveOptions o;
    o.depth = 8;
    o.n_samples = 50000;
    o.seed = 9;
    o.method = MvMethod::direct;
    auto mv = solve_alpha_mv(e, o);
    EXPECT_EQ(mv.method, MvMethod::direct);
    EXPECT_NEAR(mv.alpha, 1.0, 4 * mv.alpha_se);
    EXPECT_NEAR(mv.m_alpha, std::log(2.0) / 3.0, 4 * mv.m_alpha_se);
    EXPECT_EQ(mv.h_curve.size(), 21u);
}

TEST(SolveMv, DirectMethodRejectsThinWeights) {
    // At depth 30 the mean of ||Pi'||^s near the root is carried by a few paths.
    auto ln = FactorModel::log_normal(-1.5, 1.0, false);
    MvSolveOptions o;
    o.depth = 30;
    o.n_samples = 20000;
    o.method = MvMethod::direct;
    o.bracket_hi = 2.5;
    try {
        solve_alpha_mv(MatrixEnsemble::from_entries({{ln, ln}, {ln, ln}}), o);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.status(), Status::numerical) << e.what();
        EXPECT_NE(std::string(e.what()).find("effective samples"), std::string::npos) << e.what();
    }
}

TEST(SolveMv, ScalingShiftsAlphaDown) {
    // Scaling every matrix by c > 1 keeps the ensemble contracting but lowers alpha.
    MvSolveOptions o;
    o.depth = 20;
    o.n_samples = 10000;
    o.seed = 2;
    auto base = diagonal_tp();
    auto a1 = solve_alpha_mv(base, o).alpha;
    auto a2 = solve_alpha_mv(base.scaled(1.1), o).alpha;
    EXPECT_LT(a2, a1);
}

TEST(SolveMv, BracketFailure) {
    MvSolveOptions o;
    o.depth = 10;
    o.n_samples = 5000;
    o.bracket_lo = 2.0;
    o.bracket_hi = 3.0;
    try {
        solve_alpha_mv(diagonal_tp(), o);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.status(), Status::no_root);
    }
}

TEST(MvTail, InfeasibleDepthReportsRange) {
    MultivariateCramer mv;
    mv.alpha = 1.0;
    mv.m_alpha = 0.25;
    SimulationConfig cfg;
    cfg.n_paths = 1000;
    double lmax = mv_feasible_logx_max(mv, cfg.n_paths);
    EXPECT_NEAR(lmax, std::log(1000.0 / 2.5), 1e-12);
    std::vector<double> u{1.0, 0.0}, v{1.0, 0.0};
    try {
        mv_tail_estimates(diagonal_tp(), mv, u, v, {lmax + 1.0}, cfg);
        FAIL();
    } catch (const InfeasibleError& e) {
        EXPECT_NEAR(e.logx_max(), lmax, 1e-12);
    }
}

TEST(MvTail, ScalarReductionAgainstBruteForce) {
    auto ens = diagonal_tp();
    MultivariateCramer mv;
    mv.alpha = 1.0;
    mv.m_alpha = std::log(2.0) / 3.0;
    SimulationConfig cfg;
    cfg.n_paths = 100000;
    cfg.seed = 5;
    cfg.truncation.mode = Truncation::Mode::fixed;
    cfg.truncation.fixed_n = 300;
    std::vector<double> e1{1.0, 0.0};
    auto r = mv_tail_estimates(ens, mv, e1, e1, {2.0, 3.0}, cfg);
    for (const auto& p : r.points) {
        double exact = brute_force_p(tp(), p.log_x, 300);
        EXPECT_NEAR(p.p_u, exact, 4 * p.se_u) << p.log_x;
        EXPECT_EQ(p.p_u, p.p_uv);  // v = u = e1 sees the same coordinate
        EXPECT_NEAR(p.ratio, 1.0, 1e-12);
    }
}

// With one row, (cA, c x) has the same law as (A, x), so the ratio must not move.
TEST(MvTail, RatioInvariantUnderJointRescaling) {
    auto ln = FactorModel::log_normal(-1.5, 1.0, false);
    auto ens = MatrixEnsemble::from_entries({{ln, ln}, {ln, ln}});
    MultivariateCramer mv;
    mv.alpha = 2.0;
    mv.m_alpha = 1.0;
    SimulationConfig cfg;
    cfg.n_paths = 200000;
    cfg.seed = 12;
    cfg.truncation.mode = Truncation::Mode::fixed;
    cfg.truncation.fixed_n = 1;
    std::vector<double> u{std::sqrt(0.5), std::sqrt(0.5)}, v{1.0, 0.0};
    const double c = 3.0;
    auto a = mv_tail_estimates(ens, mv, u, v, {0.5}, cfg).points[0];
    cfg.seed = 13;
    auto b = mv_tail_estimates(ens.scaled(c), mv, u, v, {0.5 + std::log(c)}, cfg).points[0];
    EXPECT_NEAR(a.ratio, b.ratio, 3 * std::hypot(a.ratio_se, b.ratio_se));
}

TEST(MvTail, Determinism) {
    auto ens = MatrixEnsemble::from_entries({{FactorModel::log_normal(-1.5, 1.0, false), 0.2}, {0.2, FactorModel::log_normal(-1.5, 1.0, false)}});
    MultivariateCramer mv;
    mv.alpha = 2.0;
    mv.m_alpha = 1.0;
    SimulationConfig cfg;
    cfg.n_paths = kChunkPaths + 100;
    cfg.truncation.mode = Truncation::Mode::fixed;
    cfg.truncation.fixed_n = 20;
    std::vector<double> u{std::sqrt(0.5), std::sqrt(0.5)}, v{1.0, 0.0};
    auto a = mv_tail_estimates(ens, mv, u, v, {1.0}, cfg);
    cfg.workers = 2;
    auto b = mv_tail_estimates(ens, mv, u, v, {1.0}, cfg);
    EXPECT_EQ(a.points[0].p_u, b.points[0].p_u);
    EXPECT_EQ(a.points[0].p_uv, b.points[0].p_uv);
    EXPECT_LE(a.points[0].p_uv, a.points[0].p_u);
}
