#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "perp/cramer_solver.hpp"
#include "perp/factor_models.hpp"
#include "perp/rng.hpp"

namespace perp {

struct Truncation {
    enum class Mode { fixed, adaptive };
    Mode mode = Mode::adaptive;
    std::size_t fixed_n = 0;
    double eps = 1e-12;
    double gamma = 0.0;  // 0 selects alpha / 2
};

struct SimulationConfig {
    std::uint64_t n_paths = 100000;
    std::uint64_t seed = 0;
    Truncation truncation;
    unsigned workers = 1;
};

struct PerNEstimate {
    std::size_t n;
    double value;
    double std_error;
    std::uint64_t n_samples;
};

struct TiltedEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::uint64_t n_samples = 0;
    // Deterministic bound on the neglected terms (0 when nothing was truncated).
    double truncation_bound = 0.0;
    std::vector<PerNEstimate> per_n;
};

struct StoppedChainSample {
    double w;
    std::size_t n1;
};

// Number of rows kept by the truncated series.
std::size_t truncation_rows(const FactorModel& model, const CramerSolution* sol, const Truncation& t);

std::vector<double> simulate_Y(const FactorModel& model, const CramerSolution* sol, const SimulationConfig& cfg);

struct TailCount {
    double log_x;
    std::uint64_t upper_hits;  // Y > x
    std::uint64_t lower_hits;  // Y < -x
    std::uint64_t n;
    double upper() const { return static_cast<double>(upper_hits) / static_cast<double>(n); }
    double lower() const { return static_cast<double>(lower_hits) / static_cast<double>(n); }
    double upper_se() const;
    double lower_se() const;
};

std::vector<TailCount> count_tails(const std::vector<double>& samples, const std::vector<double>& log_x);

TiltedEstimate is_tail_pn(const FactorModel& model, const CramerSolution& sol, std::size_t n, double log_x,
                          std::uint64_t n_samples, std::uint64_t seed, unsigned workers = 1);
// P(Pi~_i > x) for the i-th point of the sign-stopped chain.
TiltedEstimate is_tail_pn_signed(const FactorModel& model, const CramerSolution& sol, std::size_t i, double log_x,
                                 std::uint64_t n_samples, std::uint64_t seed, unsigned workers = 1);

struct TailSumOptions {
    std::uint64_t samples_per_n = 100000;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    double rel_tol = 1e-4;    // remainder tolerance relative to the renewal scale
    std::size_t n_max = 0;    // 0 selects the adaptive horizon
    bool stopped_chain = false;  // signed models: sum over the sign-stopped chain instead
};

TiltedEstimate is_tail_p(const FactorModel& model, const CramerSolution& sol, double log_x, const TailSumOptions& opts);

double brute_force_p(const FactorModel& model, double log_x, std::size_t n_max);

enum class Measure { plain, tilted };

StoppedChainSample sample_stopped_chain(const FactorModel& model, const CramerSolution& sol, Stream& rng,
                                        Measure measure = Measure::plain);

struct RuinOptions {
    bool absolute = false;  // max |Pi'_n| instead of max Pi'_n
};

TiltedEstimate simulate_ruin(const FactorModel& model, const CramerSolution* sol, double log_x,
                             const SimulationConfig& cfg, const RuinOptions& opts = {});

struct LindleyLevel {
    double u;
    std::uint64_t exceedances;
    std::uint64_t clusters;  // regeneration cycles containing at least one exceedance
    double mean_cluster_size;
    double rate;     // fraction of steps above u
    double rate_se;  // standard error across paths
};

struct LindleyStats {
    std::uint64_t n_paths = 0;
    std::size_t n_steps = 0;
    std::uint64_t zero_hits = 0;
    double min_value = 0.0;
    double max_value = 0.0;
    std::vector<LindleyLevel> levels;
};

LindleyStats simulate_lindley(const FactorModel& model, std::size_t n_steps, const SimulationConfig& cfg,
                              const std::vector<double>& u_grid);

// (2 n log n / (alpha m))^{1/alpha}.
double ev_normalizer(const CramerSolution& sol, double n);
// (n / (alpha m_tilde))^{1/alpha}, matching the renewal-scale tail.
double ev_normalizer_renewal(const CramerSolution& sol, double n);

struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
    std::uint64_t n_samples = 0;
};

inline constexpr std::size_t kGoldieBurnIn = 1000;

Estimate goldie_constant(const FactorModel& model, const CramerSolution& sol, const SimulationConfig& cfg);

inline constexpr std::size_t kStepGuard = 1'000'000;

}  // namespace perp
