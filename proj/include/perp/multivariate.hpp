#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "perp/factor_models.hpp"
#include "perp/mc_engine.hpp"
#include "perp/rng.hpp"

namespace perp {

inline constexpr int kMaxDim = 8;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

struct MatrixAtom {
    Mat matrix;
    double prob;
};

// A matrix entry is either a constant >= 0 or a nonnegative factor model.
using EntrySpec = std::variant<double, FactorModel>;

class MatrixEnsemble {
public:
    static MatrixEnsemble from_entries(const std::vector<std::vector<EntrySpec>>& entries);
    static MatrixEnsemble from_atoms(const std::vector<MatrixAtom>& atoms);

    std::size_t dim() const { return d_; }
    Mat sample(Stream& rng) const;
    MatrixEnsemble scaled(double c) const;

    const std::vector<std::vector<EntrySpec>>& entries() const { return entries_; }
    const std::vector<MatrixAtom>& atoms() const { return atoms_; }
    double scale() const { return scale_; }

    // Condition that the log spectral radii generate a dense subgroup; not checkable, so user-declared.
    bool dense_subgroup_assumed = false;

private:
    MatrixEnsemble() = default;

    std::size_t d_ = 0;
    std::vector<std::vector<EntrySpec>> entries_;
    std::vector<MatrixAtom> atoms_;
    std::vector<double> cumulative_;
    double scale_ = 1.0;
};

// Largest singular value by power iteration on M^T M.
double operator_norm(const Mat& m, double rel_tol = 1e-10);

struct HEstimate {
    double value;
    double std_error;
};

HEstimate estimate_h(const MatrixEnsemble& ens, double s, std::size_t depth, std::uint64_t n_samples,
                     std::uint64_t seed, unsigned workers = 1);

struct LyapunovEstimate {
    double gamma;
    double std_error;
    std::size_t depth;
};

LyapunovEstimate estimate_lyapunov(const MatrixEnsemble& ens, std::size_t depth, std::uint64_t n_samples,
                                   std::uint64_t seed, unsigned workers = 1, std::size_t max_depth = 1024);

struct HCurvePoint {
    double s;
    double h;
    double std_error;
    double log_moment_short;  // log E||Pi'_{depth/2}||^s
};

enum class MvMethod {
    resampled,  // particle estimate of the growth rate of E|Pi'_n x|^s, resampled every step
    direct,     // plain mean of ||Pi'_depth||^s, differenced between depth/2 and depth
};

const char* mv_method_name(MvMethod m) noexcept;
MvMethod mv_method_from_name(const std::string& name);

struct MultivariateCramer {
    MvMethod method = MvMethod::resampled;
    double alpha = 0.0;
    double alpha_se = 0.0;
    // Shift of alpha over the last depth doubling (resampled method only).
    double alpha_depth_error = 0.0;
    double m_alpha = 0.0;
    double m_alpha_se = 0.0;
    double lyapunov = 0.0;
    double lyapunov_se = 0.0;
    std::size_t n_products = 0;
    std::uint64_t n_samples = 0;
    std::vector<HCurvePoint> h_curve;
};

struct MvSolveOptions {
    std::size_t depth = 30;
    std::uint64_t n_samples = 1'000'000;
    double bracket_lo = 0.05;
    double bracket_hi = 4.0;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    MvMethod method = MvMethod::resampled;
};

// Direct estimates whose weights ||Pi'||^alpha have fewer effective samples than this are rejected.
inline constexpr double kMinEffectiveSamples = 100.0;
// At most this many depth doublings after the first resampled solve.
inline constexpr int kMvDoublings = 3;

MultivariateCramer solve_alpha_mv(const MatrixEnsemble& ens, const MvSolveOptions& opts);

struct MvTailPoint {
    double log_x;
    double p_u;
    double se_u;
    double p_uv;
    double se_uv;
    double ratio;
    double ratio_se;
    std::uint64_t hits_u;
    std::uint64_t hits_uv;
};

struct MvTailResult {
    std::size_t n_max = 0;
    std::uint64_t n_paths = 0;
    std::vector<MvTailPoint> points;
};

// Feasible log x range for plain Monte Carlo with n_paths paths.
double mv_feasible_logx_max(const MultivariateCramer& mv, std::uint64_t n_paths);

MvTailResult mv_tail_estimates(const MatrixEnsemble& ens, const MultivariateCramer& mv, const std::vector<double>& u,
                               const std::vector<double>& v, const std::vector<double>& log_x_grid,
                               const SimulationConfig& cfg, double rel_tol = 1e-3);

}  // namespace perp
