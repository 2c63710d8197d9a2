#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "perp/rng.hpp"

namespace perp {

class FactorModel;

struct LogNormal {
    double mu;
    double s;  // standard deviation of log X
};

struct GammaFactor {
    double gamma;  // shape
    double beta;   // rate
};

// X = e^{Z - mu} with Z ~ Gamma(gamma, beta).
struct LogGamma {
    double gamma;
    double beta;
    double mu;
};

struct TwoPoint {
    double a;
    double b;
    double p_a;
};

struct SignedMixture {
    std::shared_ptr<const FactorModel> base;
    double q;  // probability of a sign flip
};

struct MomentReport {
    double s;
    double h;
    double m;
    double sigma2;
};

// Tilted moments of log|X| split by the sign of X.
struct SignSplit {
    double p_positive;
    double mean_positive;
    double var_positive;
    double mean_negative;
    double var_negative;
};

// log|product| and its sign.
struct LogDraw {
    double log_abs;
    int sign;
};

struct Interval {
    double lo;  // open bounds of the region where h is finite
    double hi;
};

// Row draws for a fixed (n, tilt) with the per-row setup done once. Holds a pointer to the
// model, which must outlive it.
class RowSampler {
public:
    LogDraw operator()(Stream& rng) const;
    std::size_t n() const { return n_; }

private:
    friend class FactorModel;
    const FactorModel* model_ = nullptr;
    std::size_t n_ = 0;
    double tilt_ = 0.0;
    std::vector<double> count_cdf_;  // two-point: CDF of the number of a-atoms
    double log_a_ = 0.0, log_b_ = 0.0;
    bool neg_a_ = false, neg_b_ = false;
    double odd_flip_ = 0.0;  // signed mixtures: P(odd number of flips)
};

class FactorModel {
public:
    using Kind = std::variant<LogNormal, GammaFactor, LogGamma, TwoPoint, SignedMixture>;

    // Each factory validates parameters and, unless disabled (matrix entries), rejects
    // nonnegative drift.
    static FactorModel log_normal(double mu, double s, bool check_drift = true);
    static FactorModel gamma(double gamma, double beta, bool check_drift = true);
    static FactorModel log_gamma(double gamma, double beta, double mu, bool check_drift = true);
    static FactorModel two_point(double a, double b, double p_a, bool check_drift = true);
    static FactorModel signed_mixture(const FactorModel& base, double q, bool check_drift = true);

    const Kind& kind() const { return kind_; }
    std::string kind_name() const;

    Interval domain() const;
    double h(double s) const;
    double log_h(double s) const;
    double m(double s) const;
    double sigma2(double s) const;
    MomentReport moments(double s) const;
    // E[log|X|] under the s-tilted law.
    double tilted_mean(double s) const;
    SignSplit sign_split(double s) const;

    double drift() const { return tilted_mean(0.0); }
    bool is_signed() const;
    bool degenerate() const;
    bool arithmetic(double* span = nullptr) const;
    // Essential supremum of |X| (infinity when unbounded).
    double ess_sup_abs() const;

    double sample(Stream& rng) const;
    double sample_tilted(double alpha, Stream& rng) const;
    LogDraw sample_log(double tilt, Stream& rng) const;
    // log|X_1...X_n| for n iid factors under the tilt, drawn directly from its closed-form law
    // where one exists.
    LogDraw sample_row(std::size_t n, double tilt, Stream& rng) const;
    RowSampler row_sampler(std::size_t n, double tilt) const;
    // Same law, always by n single-factor draws.
    LogDraw sample_row_loop(std::size_t n, double tilt, Stream& rng) const;

private:
    explicit FactorModel(Kind kind) : kind_(std::move(kind)) {}
    void check_in_domain(double s) const;
    void check_drift() const;

    Kind kind_;
};

}  // namespace perp
