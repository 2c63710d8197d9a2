#include "perp/cramer_solver.hpp"

#include <cmath>
#include <sstream>

#include "perp/errors.hpp"

namespace perp {

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

constexpr double kMaxSearch = 1e6;
constexpr double kBoundaryGap = 1e-12;

}  // namespace

double stopped_chain_variance(const SignSplit& sp, double m) {
    double p = sp.p_positive, q = 1.0 - p;
    if (q <= 0.0) return sp.var_positive;
    double mp = sp.mean_positive, mn = sp.mean_negative;
    // E[Var(W | N1)] + Var(E[W | N1]) with N1 = 1 w.p. p and n >= 2 w.p. q^2 p^(n-2).
    double within = 2.0 * p * sp.var_positive + 2.0 * q * sp.var_negative;
    double second = p * mp * mp + 4.0 * q * mn * mn + 4.0 * p * mn * mp + mp * mp * p * (1.0 + p) / q;
    double between = second - 4.0 * m * m;
    return within + std::max(between, 0.0);
}

CramerSolution solve_alpha(const FactorModel& model, std::optional<Interval> bracket_hint) {
    auto f = [&](double s) { return model.log_h(s); };
    Interval dom = model.domain();
    double lo = 0.0, hi = 0.0;

    if (bracket_hint) {
        lo = bracket_hint->lo;
        hi = bracket_hint->hi;
        if (!(lo > 0.0 && hi > lo))
            throw Error(Status::invalid_argument, "bracket must satisfy 0 < lo < hi");
        if (!(hi < dom.hi)) throw Error(Status::domain, "bracket upper end " + fmt(hi) + " outside h domain (< " + fmt(dom.hi) + ")");
        if (!(f(lo) < 0.0 && f(hi) > 0.0))
            throw Error(Status::no_root, "no Cramér root: log h does not change sign on [" + fmt(lo) + ", " + fmt(hi) + "]");
    } else {
        lo = 1e-3;
        if (!(lo < dom.hi)) throw Error(Status::boundary, "h domain too small to bracket a root");
        if (!(f(lo) < 0.0)) throw Error(Status::no_root, "no Cramér root: log h(1e-3) >= 0");
        double s = lo;
        for (;;) {
            double next = 2.0 * s;
            if (!(next < dom.hi)) next = 0.5 * (s + dom.hi);
            if (next > kMaxSearch)
                throw Error(Status::no_root, "no Cramér root: log h stays nonpositive up to s = " + fmt(s));
            if (dom.hi - next < kBoundaryGap)
                throw Error(Status::boundary, "Cramér root at the domain boundary s = " + fmt(dom.hi));
            if (f(next) > 0.0) {
                lo = s;
                hi = next;
                break;
            }
            s = next;
        }
    }

    double flo = f(lo), fhi = f(hi);
    while (hi - lo > 1e-13 * std::max(1.0, hi)) {
        double mid = 0.5 * (lo + hi);
        double fm = f(mid);
        if (fm > 0.0) {
            hi = mid;
            fhi = fm;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    double alpha = (fhi != flo) ? lo - flo * (hi - lo) / (fhi - flo) : 0.5 * (lo + hi);
    if (!(alpha >= lo && alpha <= hi)) alpha = 0.5 * (lo + hi);
    if (dom.hi - alpha < kBoundaryGap) throw Error(Status::boundary, "Cramér root at the domain boundary s = " + fmt(dom.hi));

    double h = model.h(alpha);
    if (std::fabs(h - 1.0) > 1e-12)
        throw Error(Status::numerical, "solver residual |h(alpha) - 1| = " + fmt(std::fabs(h - 1.0)) + " exceeds 1e-12");

    CramerSolution sol;
    sol.alpha = alpha;
    sol.m_alpha = model.m(alpha);
    sol.sigma2_alpha = model.sigma2(alpha);
    sol.drift = model.drift();
    sol.is_signed = model.is_signed();
    sol.h_residual = h - 1.0;
    if (!(sol.m_alpha > 0.0)) throw Error(Status::numerical, "m(alpha) must be positive, got " + fmt(sol.m_alpha));
    if (sol.is_signed) {
        SignSplit sp = model.sign_split(alpha);
        double mean = model.tilted_mean(alpha);
        sol.positive_fraction = sp.p_positive;
        sol.m_tilde = 2.0 * sol.m_alpha;
        sol.sigma2_tilde = stopped_chain_variance(sp, mean);
        sol.leading_constant = 1.0 / sol.m_alpha;
    } else {
        sol.positive_fraction = 1.0;
        sol.m_tilde = sol.m_alpha;
        sol.sigma2_tilde = sol.sigma2_alpha;
        sol.leading_constant = 2.0 / sol.m_alpha;
    }
    return sol;
}

ConditionReport check_conditions(const FactorModel& model, const CramerSolution* sol) {
    ConditionReport r;
    r.arithmetic = model.arithmetic(&r.lattice_span);
    r.degenerate = model.degenerate();
    std::optional<CramerSolution> found;
    if (!sol) {
        try {
            found = solve_alpha(model);
            sol = &*found;
        } catch (const Error&) {
        }
    }
    r.cramer_root = sol != nullptr;
    if (sol) {
        // Every built-in family has h finite on an open set around alpha, so the second
        // log-moment is finite there; it is evaluated to catch non-finite parameters.
        try {
            double v = model.sigma2(sol->alpha) + std::pow(model.tilted_mean(sol->alpha), 2);
            r.finite_second_log_moment = std::isfinite(v);
        } catch (const Error&) {
            r.finite_second_log_moment = false;
        }
    }
    return r;
}

}  // namespace perp
