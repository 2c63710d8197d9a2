#pragma once

#include <optional>

#include "perp/factor_models.hpp"

namespace perp {

struct CramerSolution {
    double alpha = 0.0;
    double m_alpha = 0.0;
    double sigma2_alpha = 0.0;
    double drift = 0.0;
    bool is_signed = false;
    // Parameters of the walk over the sign-stopped chain; equal m_alpha, sigma2_alpha when unsigned.
    double m_tilde = 0.0;
    double sigma2_tilde = 0.0;
    double leading_constant = 0.0;
    // P(X > 0) under the alpha-tilted law.
    double positive_fraction = 1.0;
    double h_residual = 0.0;
};

struct ConditionReport {
    bool finite_second_log_moment = false;
    bool arithmetic = false;
    double lattice_span = 0.0;
    bool degenerate = false;
    bool cramer_root = false;
};

CramerSolution solve_alpha(const FactorModel& model, std::optional<Interval> bracket_hint = std::nullopt);

ConditionReport check_conditions(const FactorModel& model, const CramerSolution* sol);

// Variance of the block log-sum of the sign-stopped chain under the alpha-tilted law.
double stopped_chain_variance(const SignSplit& split, double m);

}  // namespace perp
