#include "perp/tail_engine.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <variant>

#include "perp/errors.hpp"
#include "perp/special.hpp"

namespace perp {

namespace {

constexpr int kGammaGrid = 200;
constexpr std::size_t kMaxHorizon = 10'000'000;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

void require_positive_log(double log_x) {
    if (!(log_x > 0.0) || !std::isfinite(log_x))
        throw Error(Status::domain, "x must exceed 1 (log x = " + fmt(log_x) + ")");
}

}  // namespace

double leading_tail(const CramerSolution& sol, double log_x) {
    require_positive_log(log_x);
    return sol.leading_constant * log_x * std::exp(-sol.alpha * log_x);
}

double renewal_tail(const CramerSolution& sol, double log_x) {
    require_positive_log(log_x);
    return std::exp(-sol.alpha * log_x) / (sol.alpha * sol.m_tilde);
}

double normal_approx_tail(const CramerSolution& sol, double log_x) {
    require_positive_log(log_x);
    if (!(sol.sigma2_tilde > 0.0))
        throw Error(Status::unsupported, "degenerate model (sigma^2 = 0): use the exact lattice computation");
    if (!(log_x >= sol.m_tilde))
        throw Error(Status::domain, "normal approximation needs log x >= m_tilde = " + fmt(sol.m_tilde));
    auto g0 = static_cast<std::size_t>(std::floor(log_x / sol.m_tilde));
    double sum = 0.0;
    for (std::size_t n = 1; n <= g0; ++n) {
        double nd = static_cast<double>(n);
        sum += special::normal_cdf((log_x - nd * sol.m_tilde) / std::sqrt(sol.sigma2_tilde * nd));
    }
    double c = sol.is_signed ? 1.0 : 2.0;
    return c * std::exp(-sol.alpha * log_x) * sum;
}

double tilted_exact_tail(const FactorModel& model, const CramerSolution& sol, double log_x,
                         std::optional<std::size_t> n_terms) {
    require_positive_log(log_x);
    const auto* lg = std::get_if<LogGamma>(&model.kind());
    if (!lg) throw Error(Status::unsupported, "exact tilted evaluation is only available for log_gamma models");
    std::size_t n_max = n_terms ? *n_terms : adaptive_horizon(model, sol, log_x, 1e-10);
    // Under the tilt each Z_j ~ Gamma(gamma, beta - alpha); the weight e^{-alpha S_n} integrates
    // the tilted Gamma(n gamma, beta - alpha) tail back to the plain Gamma(n gamma, beta) tail.
    double sum = 0.0;
    for (std::size_t n = 1; n <= n_max; ++n) {
        double nd = static_cast<double>(n);
        sum += special::gamma_q(nd * lg->gamma, lg->beta * (log_x + nd * lg->mu));
    }
    double bound = markov_remainder(model, sol, log_x, n_max);
    if (bound > 0.01 * sum)
        throw TruncationError("truncated remainder bound " + fmt(bound) + " exceeds 1% of the sum " + fmt(sum) +
                                  " at n_terms = " + std::to_string(n_max),
                              sum, bound);
    return sum;
}

double kesten_ratio(const CramerSolution& sol, double kesten_constant, double log_x) {
    if (!(kesten_constant > 0.0)) throw Error(Status::invalid_argument, "Kesten constant must be positive");
    return 2.0 * sol.alpha * log_x / kesten_constant;
}

TruncationHorizon horizon(const CramerSolution& sol, double log_x, double xi) {
    require_positive_log(log_x);
    double v = std::floor((1.0 + xi) * log_x / sol.m_tilde);
    return TruncationHorizon{xi, v > 0.0 ? static_cast<std::size_t>(v) : 0};
}

double markov_remainder(const FactorModel& model, const CramerSolution& sol, double log_x, std::size_t n) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 1; j <= kGammaGrid; ++j) {
        double g = sol.alpha * j / (kGammaGrid + 1.0);
        double lh = model.log_h(g);
        if (!(lh < 0.0)) continue;
        double v = -g * log_x + (static_cast<double>(n) + 1.0) * lh - std::log(-std::expm1(lh));
        best = std::min(best, v);
    }
    return std::exp(best);
}

std::size_t adaptive_horizon(const FactorModel& model, const CramerSolution& sol, double log_x, double rel_tol) {
    std::size_t floor_n = std::max<std::size_t>(horizon(sol, log_x, 0.5).n_max, 1);
    double log_target = std::log(rel_tol) + std::log(renewal_tail(sol, log_x));
    double best = std::numeric_limits<double>::infinity();
    for (int j = 1; j <= kGammaGrid; ++j) {
        double g = sol.alpha * j / (kGammaGrid + 1.0);
        double lh = model.log_h(g);
        if (!(lh < 0.0)) continue;
        double rhs = log_target + g * log_x + std::log(-std::expm1(lh));
        double need = rhs >= 0.0 ? 0.0 : std::ceil(rhs / lh) - 1.0;
        best = std::min(best, need);
    }
    if (!(best < static_cast<double>(kMaxHorizon)))
        throw Error(Status::numerical, "adaptive horizon exceeds " + std::to_string(kMaxHorizon) + " terms");
    return std::max(floor_n, static_cast<std::size_t>(std::max(best, 1.0)));
}

std::vector<double> TailCurve::ratio_normal() const {
    std::vector<double> r(size(), kNaN);
    if (!normal_approx) return r;
    for (std::size_t i = 0; i < size(); ++i) r[i] = (*normal_approx)[i] / leading[i];
    return r;
}

std::vector<double> TailCurve::ratio_tilted() const {
    std::vector<double> r(size(), kNaN);
    if (!tilted_exact) return r;
    for (std::size_t i = 0; i < size(); ++i) r[i] = (*tilted_exact)[i] / leading[i];
    return r;
}

std::vector<double> log_uniform_grid(double logx_min, double logx_max, double points_per_decade) {
    if (!(logx_min > 0.0) || !(logx_max >= logx_min) || !std::isfinite(logx_max))
        throw Error(Status::invalid_argument, "grid needs 0 < logx_min <= logx_max");
    if (!(points_per_decade > 0.0)) throw Error(Status::invalid_argument, "points_per_decade must be positive");
    if (logx_max == logx_min) return {logx_min};
    double decades = std::log10(logx_max / logx_min);
    auto n = static_cast<std::size_t>(std::max(1.0, std::round(points_per_decade * decades))) + 1;
    std::vector<double> g(n);
    double a = std::log(logx_min), b = std::log(logx_max);
    for (std::size_t i = 0; i < n; ++i) g[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
    g.front() = logx_min;
    g.back() = logx_max;
    return g;
}

TailCurve build_tail_curve(const FactorModel& model, const CramerSolution& sol, const CurveOptions& opts) {
    TailCurve c;
    c.log_x = log_uniform_grid(opts.logx_min, opts.logx_max, opts.points_per_decade);
    c.labels.push_back("leading: leading_constant * log x / x^alpha");
    for (double L : c.log_x) c.leading.push_back(leading_tail(sol, L));
    if (opts.normal) {
        if (!(sol.sigma2_tilde > 0.0))
            throw Error(Status::unsupported, "degenerate model (sigma^2 = 0): normal column unavailable");
        std::vector<double> col;
        for (double L : c.log_x) col.push_back(L >= sol.m_tilde ? normal_approx_tail(sol, L) : kNaN);
        c.normal_approx = std::move(col);
        c.labels.push_back("normal_approx: CLT sum over n <= log x / m_tilde");
    }
    if (opts.tilted) {
        std::vector<double> col;
        for (double L : c.log_x) col.push_back(tilted_exact_tail(model, sol, L));
        c.tilted_exact = std::move(col);
        c.labels.push_back("tilted_exact: exact sum of P(Pi_n > x) via the tilted Gamma law");
    }
    return c;
}

}  // namespace perp
