#include "perp/factor_models.hpp"

#include <algorithm>
#include <cstdint>
#include <random>
#include <cmath>
#include <limits>
#include <sstream>

#include "perp/errors.hpp"
#include "perp/special.hpp"

namespace perp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(Status::invalid_argument, what);
}

bool finite(double v) { return std::isfinite(v); }

// Probability of atom a under the t-tilted TwoPoint law.
double two_point_weight(const TwoPoint& k, double t) {
    if (k.p_a <= 0.0) return 0.0;
    if (k.p_a >= 1.0) return 1.0;
    double ta = std::log(k.p_a) + t * std::log(std::fabs(k.a));
    double tb = std::log1p(-k.p_a) + t * std::log(std::fabs(k.b));
    return 1.0 / (1.0 + std::exp(tb - ta));
}

// log of a Gamma(shape, rate) variate, stable for small shapes.
double log_gamma_variate(double shape, double rate, Stream& rng) {
    if (shape >= 1.0) {
        std::gamma_distribution<double> g(shape, 1.0);
        return std::log(g(rng)) - std::log(rate);
    }
    std::gamma_distribution<double> g(shape + 1.0, 1.0);
    double lg = std::log(g(rng));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = 1.0 - unif(rng);
    return lg + std::log(u) / shape - std::log(rate);
}

int parity_sign(std::uint64_t count) { return (count & 1u) ? -1 : 1; }

// P(odd number of sign flips among n) = (1 - (1 - 2q)^n) / 2.
double odd_flip_probability(double q, std::size_t n) {
    return 0.5 * (1.0 - std::pow(1.0 - 2.0 * q, static_cast<double>(n)));
}

// Rational approximation of r with denominator at most max_den, or 0 when none fits.
long rational_denominator(double r, long max_den, double tol) {
    double x = r;
    long h0 = 0, h1 = 1, k0 = 1, k1 = 0;
    for (int iter = 0; iter < 64; ++iter) {
        double a = std::floor(x);
        long ai = static_cast<long>(a);
        long h2 = ai * h1 + h0;
        long k2 = ai * k1 + k0;
        if (k2 > max_den) return 0;
        if (std::fabs(static_cast<double>(h2) / static_cast<double>(k2) - r) <= tol * std::max(1.0, std::fabs(r)))
            return k2;
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        double frac = x - a;
        if (frac < 1e-15) return 0;
        x = 1.0 / frac;
    }
    return 0;
}

}  // namespace

FactorModel FactorModel::log_normal(double mu, double s, bool check_drift) {
    require(finite(mu), "log_normal: mu must be finite");
    require(finite(s) && s > 0.0, "log_normal: s must be positive");
    FactorModel m(LogNormal{mu, s});
    if (check_drift) m.check_drift();
    return m;
}

FactorModel FactorModel::gamma(double gamma, double beta, bool check_drift) {
    require(finite(gamma) && gamma > 0.0, "gamma: gamma must be positive");
    require(finite(beta) && beta > 0.0, "gamma: beta must be positive");
    FactorModel m(GammaFactor{gamma, beta});
    if (check_drift) m.check_drift();
    return m;
}

FactorModel FactorModel::log_gamma(double gamma, double beta, double mu, bool check_drift) {
    require(finite(gamma) && gamma > 0.0, "log_gamma: gamma must be positive");
    require(finite(beta) && beta > 0.0, "log_gamma: beta must be positive");
    require(finite(mu) && mu > 0.0, "log_gamma: mu must be positive");
    FactorModel m(LogGamma{gamma, beta, mu});
    if (check_drift) m.check_drift();
    return m;
}

FactorModel FactorModel::two_point(double a, double b, double p_a, bool check_drift) {
    require(finite(a) && a != 0.0, "two_point: a must be finite and nonzero");
    require(finite(b) && b != 0.0, "two_point: b must be finite and nonzero");
    require(finite(p_a) && p_a >= 0.0 && p_a <= 1.0, "two_point: p_a must lie in [0, 1]");
    FactorModel m(TwoPoint{a, b, p_a});
    if (check_drift) m.check_drift();
    return m;
}

FactorModel FactorModel::signed_mixture(const FactorModel& base, double q, bool check_drift) {
    require(finite(q) && q > 0.0 && q < 1.0, "signed_mixture: q must lie in (0, 1)");
    require(!base.is_signed(), "signed_mixture: base must be a nonnegative model");
    FactorModel m(SignedMixture{std::make_shared<const FactorModel>(base), q});
    if (check_drift) m.check_drift();
    return m;
}

void FactorModel::check_drift() const {
    double d = drift();
    if (!(d < 0.0))
        throw Error(Status::invalid_argument, "nonnegative drift: E log|X| = " + fmt(d) + " must be < 0");
}

std::string FactorModel::kind_name() const {
    return std::visit(Overloaded{[](const LogNormal&) { return std::string("log_normal"); },
                                 [](const GammaFactor&) { return std::string("gamma"); },
                                 [](const LogGamma&) { return std::string("log_gamma"); },
                                 [](const TwoPoint&) { return std::string("two_point"); },
                                 [](const SignedMixture&) { return std::string("signed_mixture"); }},
                      kind_);
}

Interval FactorModel::domain() const {
    return std::visit(Overloaded{[](const LogNormal&) { return Interval{-kInf, kInf}; },
                                 [](const GammaFactor& k) { return Interval{-k.gamma, kInf}; },
                                 [](const LogGamma& k) { return Interval{-kInf, k.beta}; },
                                 [](const TwoPoint&) { return Interval{-kInf, kInf}; },
                                 [](const SignedMixture& k) { return k.base->domain(); }},
                      kind_);
}

void FactorModel::check_in_domain(double s) const {
    Interval d = domain();
    if (!finite(s)) throw Error(Status::domain, "moment order must be finite");
    if (!(s > d.lo)) throw Error(Status::domain, kind_name() + ": s = " + fmt(s) + " must exceed " + fmt(d.lo));
    if (!(s < d.hi)) throw Error(Status::domain, kind_name() + ": s = " + fmt(s) + " must be below " + fmt(d.hi));
}

double FactorModel::log_h(double s) const {
    check_in_domain(s);
    if (s == 0.0) return 0.0;
    return std::visit(
        Overloaded{[s](const LogNormal& k) { return k.mu * s + 0.5 * s * s * k.s * k.s; },
                   [s](const GammaFactor& k) {
                       return std::lgamma(k.gamma + s) - std::lgamma(k.gamma) - s * std::log(k.beta);
                   },
                   [s](const LogGamma& k) { return -s * k.mu - k.gamma * std::log1p(-s / k.beta); },
                   [s](const TwoPoint& k) {
                       double la = std::log(std::fabs(k.a)), lb = std::log(std::fabs(k.b));
                       if (k.p_a <= 0.0) return s * lb;
                       if (k.p_a >= 1.0) return s * la;
                       double ta = std::log(k.p_a) + s * la;
                       double tb = std::log1p(-k.p_a) + s * lb;
                       double hi = std::max(ta, tb);
                       return hi + std::log(std::exp(ta - hi) + std::exp(tb - hi));
                   },
                   [s](const SignedMixture& k) { return k.base->log_h(s); }},
        kind_);
}

double FactorModel::h(double s) const { return s == 0.0 ? 1.0 : std::exp(log_h(s)); }

double FactorModel::tilted_mean(double s) const {
    check_in_domain(s);
    return std::visit(
        Overloaded{[s](const LogNormal& k) { return k.mu + s * k.s * k.s; },
                   [s](const GammaFactor& k) { return special::digamma(k.gamma + s) - std::log(k.beta); },
                   [s](const LogGamma& k) { return k.gamma / (k.beta - s) - k.mu; },
                   [s](const TwoPoint& k) {
                       double w = two_point_weight(k, s);
                       return w * std::log(std::fabs(k.a)) + (1.0 - w) * std::log(std::fabs(k.b));
                   },
                   [s](const SignedMixture& k) { return k.base->tilted_mean(s); }},
        kind_);
}

double FactorModel::m(double s) const { return h(s) * tilted_mean(s); }

double FactorModel::sigma2(double s) const {
    check_in_domain(s);
    return std::visit(
        Overloaded{[](const LogNormal& k) { return k.s * k.s; },
                   [s](const GammaFactor& k) { return special::trigamma(k.gamma + s); },
                   [s](const LogGamma& k) { return k.gamma / ((k.beta - s) * (k.beta - s)); },
                   [s](const TwoPoint& k) {
                       double w = two_point_weight(k, s);
                       double d = std::log(std::fabs(k.a)) - std::log(std::fabs(k.b));
                       return w * (1.0 - w) * d * d;
                   },
                   [s](const SignedMixture& k) { return k.base->sigma2(s); }},
        kind_);
}

MomentReport FactorModel::moments(double s) const { return MomentReport{s, h(s), m(s), sigma2(s)}; }

SignSplit FactorModel::sign_split(double s) const {
    check_in_domain(s);
    return std::visit(
        Overloaded{[&](const TwoPoint& k) {
                       double w = two_point_weight(k, s);
                       double la = std::log(std::fabs(k.a)), lb = std::log(std::fabs(k.b));
                       double wa_pos = k.a > 0.0 ? w : 0.0, wb_pos = k.b > 0.0 ? 1.0 - w : 0.0;
                       double wa_neg = k.a < 0.0 ? w : 0.0, wb_neg = k.b < 0.0 ? 1.0 - w : 0.0;
                       auto cond = [&](double wa, double wb, double& mean, double& var) {
                           double tot = wa + wb;
                           if (tot <= 0.0) {
                               mean = var = 0.0;
                               return;
                           }
                           double pa = wa / tot;
                           mean = pa * la + (1.0 - pa) * lb;
                           var = pa * (1.0 - pa) * (la - lb) * (la - lb);
                       };
                       SignSplit r{};
                       r.p_positive = wa_pos + wb_pos;
                       cond(wa_pos, wb_pos, r.mean_positive, r.var_positive);
                       cond(wa_neg, wb_neg, r.mean_negative, r.var_negative);
                       return r;
                   },
                   [&](const SignedMixture& k) {
                       double mean = k.base->tilted_mean(s), var = k.base->sigma2(s);
                       return SignSplit{1.0 - k.q, mean, var, mean, var};
                   },
                   [&](const auto&) { return SignSplit{1.0, tilted_mean(s), sigma2(s), 0.0, 0.0}; }},
        kind_);
}

bool FactorModel::is_signed() const {
    return std::visit(Overloaded{[](const TwoPoint& k) {
                                     return (k.a < 0.0 && k.p_a > 0.0) || (k.b < 0.0 && k.p_a < 1.0);
                                 },
                                 [](const SignedMixture&) { return true; },
                                 [](const auto&) { return false; }},
                      kind_);
}

bool FactorModel::degenerate() const {
    return std::visit(Overloaded{[](const TwoPoint& k) {
                                     return k.p_a <= 0.0 || k.p_a >= 1.0 || std::fabs(k.a) == std::fabs(k.b);
                                 },
                                 [](const SignedMixture& k) { return k.base->degenerate(); },
                                 [](const auto&) { return false; }},
                      kind_);
}

bool FactorModel::arithmetic(double* span) const {
    return std::visit(Overloaded{[span](const TwoPoint& k) {
                                     double la = std::log(std::fabs(k.a)), lb = std::log(std::fabs(k.b));
                                     double d = 0.0;
                                     if (k.p_a <= 0.0 || k.p_a >= 1.0 || la == lb) {
                                         d = std::fabs(k.p_a >= 1.0 ? la : lb);
                                     } else if (la == 0.0 || lb == 0.0) {
                                         d = std::fabs(la - lb);
                                     } else {
                                         long den = rational_denominator(la / lb, 1000, 1e-12);
                                         d = den ? std::fabs(lb) / static_cast<double>(den) : std::fabs(la - lb);
                                     }
                                     if (span) *span = d;
                                     return true;
                                 },
                                 [span](const SignedMixture& k) { return k.base->arithmetic(span); },
                                 [span](const auto&) {
                                     if (span) *span = 0.0;
                                     return false;
                                 }},
                      kind_);
}

double FactorModel::ess_sup_abs() const {
    return std::visit(Overloaded{[](const TwoPoint& k) {
                                     double r = 0.0;
                                     if (k.p_a > 0.0) r = std::max(r, std::fabs(k.a));
                                     if (k.p_a < 1.0) r = std::max(r, std::fabs(k.b));
                                     return r;
                                 },
                                 [](const SignedMixture& k) { return k.base->ess_sup_abs(); },
                                 [](const auto&) { return kInf; }},
                      kind_);
}

LogDraw FactorModel::sample_log(double tilt, Stream& rng) const {
    return sample_row(1, tilt, rng);
}

double FactorModel::sample(Stream& rng) const {
    LogDraw d = sample_log(0.0, rng);
    return d.sign * std::exp(d.log_abs);
}

double FactorModel::sample_tilted(double alpha, Stream& rng) const {
    LogDraw d = sample_log(alpha, rng);
    return d.sign * std::exp(d.log_abs);
}

LogDraw FactorModel::sample_row(std::size_t n, double tilt, Stream& rng) const {
    if (n == 0) return LogDraw{0.0, 1};
    if (tilt != 0.0) check_in_domain(tilt);
    const double nd = static_cast<double>(n);
    return std::visit(
        Overloaded{[&](const LogNormal& k) {
                       std::normal_distribution<double> nd_(nd * (k.mu + tilt * k.s * k.s), k.s * std::sqrt(nd));
                       return LogDraw{nd_(rng), 1};
                   },
                   [&](const GammaFactor& k) {
                       double sum = 0.0;
                       for (std::size_t i = 0; i < n; ++i) sum += log_gamma_variate(k.gamma + tilt, k.beta, rng);
                       return LogDraw{sum, 1};
                   },
                   [&](const LogGamma& k) {
                       double z = std::exp(log_gamma_variate(nd * k.gamma, k.beta - tilt, rng));
                       return LogDraw{z - nd * k.mu, 1};
                   },
                   [&](const TwoPoint& k) {
                       std::binomial_distribution<std::uint64_t> bin(n, two_point_weight(k, tilt));
                       std::uint64_t ka = bin(rng);
                       double la = std::log(std::fabs(k.a)), lb = std::log(std::fabs(k.b));
                       int sign = 1;
                       if (k.a < 0.0) sign *= parity_sign(ka);
                       if (k.b < 0.0) sign *= parity_sign(n - ka);
                       return LogDraw{static_cast<double>(ka) * la + static_cast<double>(n - ka) * lb, sign};
                   },
                   [&](const SignedMixture& k) {
                       LogDraw d = k.base->sample_row(n, tilt, rng);
                       std::bernoulli_distribution odd(odd_flip_probability(k.q, n));
                       if (odd(rng)) d.sign = -d.sign;
                       return d;
                   }},
        kind_);
}

RowSampler FactorModel::row_sampler(std::size_t n, double tilt) const {
    if (tilt != 0.0) check_in_domain(tilt);
    RowSampler r;
    r.model_ = this;
    r.n_ = n;
    r.tilt_ = tilt;
    const TwoPoint* tp = std::get_if<TwoPoint>(&kind_);
    if (const auto* sm = std::get_if<SignedMixture>(&kind_)) {
        r.odd_flip_ = odd_flip_probability(sm->q, n);
        tp = std::get_if<TwoPoint>(&sm->base->kind());
    }
    if (tp && n > 0) {
        double w = two_point_weight(*tp, tilt);
        r.log_a_ = std::log(std::fabs(tp->a));
        r.log_b_ = std::log(std::fabs(tp->b));
        r.neg_a_ = tp->a < 0.0;
        r.neg_b_ = tp->b < 0.0;
        r.count_cdf_.resize(n + 1);
        const double lw = std::log(w), l1w = std::log1p(-w);
        double acc = 0.0;
        for (std::size_t k = 0; k <= n; ++k) {
            double lp = special::log_binomial(static_cast<unsigned>(n), static_cast<unsigned>(k));
            if (k > 0) lp += static_cast<double>(k) * lw;
            if (k < n) lp += static_cast<double>(n - k) * l1w;
            acc += std::isfinite(lp) ? std::exp(lp) : 0.0;
            r.count_cdf_[k] = acc;
        }
        for (double& c : r.count_cdf_) c /= acc;
        r.count_cdf_.back() = 1.0;
    }
    return r;
}

LogDraw RowSampler::operator()(Stream& rng) const {
    if (count_cdf_.empty()) {
        if (odd_flip_ == 0.0) return model_->sample_row(n_, tilt_, rng);
        const auto& sm = std::get<SignedMixture>(model_->kind());
        LogDraw d = sm.base->sample_row(n_, tilt_, rng);
        std::bernoulli_distribution odd(odd_flip_);
        if (odd(rng)) d.sign = -d.sign;
        return d;
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto it = std::upper_bound(count_cdf_.begin(), count_cdf_.end(), unif(rng));
    auto ka = static_cast<std::uint64_t>(std::min<std::ptrdiff_t>(it - count_cdf_.begin(), static_cast<std::ptrdiff_t>(n_)));
    int sign = 1;
    if (neg_a_) sign *= parity_sign(ka);
    if (neg_b_) sign *= parity_sign(n_ - ka);
    if (odd_flip_ > 0.0) {
        std::bernoulli_distribution odd(odd_flip_);
        if (odd(rng)) sign = -sign;
    }
    return LogDraw{static_cast<double>(ka) * log_a_ + static_cast<double>(n_ - ka) * log_b_, sign};
}

LogDraw FactorModel::sample_row_loop(std::size_t n, double tilt, Stream& rng) const {
    LogDraw acc{0.0, 1};
    for (std::size_t i = 0; i < n; ++i) {
        LogDraw d = std::visit(
            Overloaded{[&](const LogNormal& k) {
                           std::normal_distribution<double> nd_(k.mu + tilt * k.s * k.s, k.s);
                           return LogDraw{nd_(rng), 1};
                       },
                       [&](const LogGamma& k) {
                           return LogDraw{std::exp(log_gamma_variate(k.gamma, k.beta - tilt, rng)) - k.mu, 1};
                       },
                       [&](const TwoPoint& k) {
                           std::bernoulli_distribution pick(two_point_weight(k, tilt));
                           double v = pick(rng) ? k.a : k.b;
                           return LogDraw{std::log(std::fabs(v)), v < 0.0 ? -1 : 1};
                       },
                       [&](const SignedMixture& k) {
                           LogDraw b = k.base->sample_row_loop(1, tilt, rng);
                           std::bernoulli_distribution flip(k.q);
                           if (flip(rng)) b.sign = -b.sign;
                           return b;
                       },
                       [&](const auto&) { return sample_row(1, tilt, rng); }},
            kind_);
        acc.log_abs += d.log_abs;
        acc.sign *= d.sign;
    }
    return acc;
}

}  // namespace perp
