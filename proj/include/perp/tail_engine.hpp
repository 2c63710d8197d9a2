#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "perp/cramer_solver.hpp"
#include "perp/factor_models.hpp"

namespace perp {

struct TruncationHorizon {
    double xi;
    std::size_t n_max;
};

// All tail functions take log x rather than x so that deep tails stay representable.
double leading_tail(const CramerSolution& sol, double log_x);
// x^{-alpha} / (alpha m_tilde): the limit of x^alpha p(x) for non-arithmetic models.
double renewal_tail(const CramerSolution& sol, double log_x);
double normal_approx_tail(const CramerSolution& sol, double log_x);
// n_terms = 0 selects the adaptive horizon.
double tilted_exact_tail(const FactorModel& model, const CramerSolution& sol, double log_x,
                         std::optional<std::size_t> n_terms = std::nullopt);
double kesten_ratio(const CramerSolution& sol, double kesten_constant, double log_x);
TruncationHorizon horizon(const CramerSolution& sol, double log_x, double xi);

// min over gamma in (0, alpha) of x^{-gamma} h(gamma)^{n+1} / (1 - h(gamma)); bounds
// sum_{k > n} P(|Pi_k| > x).
double markov_remainder(const FactorModel& model, const CramerSolution& sol, double log_x, std::size_t n);
// Smallest n >= g_{0.5}(x) whose remainder is below rel_tol times the renewal scale.
std::size_t adaptive_horizon(const FactorModel& model, const CramerSolution& sol, double log_x, double rel_tol);

struct TailCurve {
    std::vector<double> log_x;
    std::vector<double> leading;
    std::optional<std::vector<double>> normal_approx;
    std::optional<std::vector<double>> tilted_exact;
    std::vector<std::string> labels;

    std::size_t size() const { return log_x.size(); }
    std::vector<double> ratio_normal() const;
    std::vector<double> ratio_tilted() const;
};

struct CurveOptions {
    double logx_min = 5.0;
    double logx_max = 100.0;
    double points_per_decade = 50.0;
    bool normal = true;
    bool tilted = true;
};

// Grid that is uniform in log(log x).
std::vector<double> log_uniform_grid(double logx_min, double logx_max, double points_per_decade);

TailCurve build_tail_curve(const FactorModel& model, const CramerSolution& sol, const CurveOptions& opts);

}  // namespace perp
