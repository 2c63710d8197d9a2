#include "perp/mc_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <variant>

#include "perp/errors.hpp"
#include "perp/parallel.hpp"
#include "perp/special.hpp"
#include "perp/tail_engine.hpp"

namespace perp {

namespace {

constexpr double kUnderflowLog = -745.0;

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

std::uint64_t chunk_size(std::uint64_t total, std::uint64_t c) {
    std::uint64_t begin = c * kChunkPaths;
    return std::min<std::uint64_t>(kChunkPaths, total - begin);
}

// Runs body(rng, count) -> Moments over fixed-size chunks and merges in chunk order.
template <class Body>
Moments chunked_moments(std::uint64_t total, std::uint64_t seed, std::uint64_t tag, unsigned workers, Body body) {
    std::uint64_t n_chunks = chunk_count(total);
    std::vector<Moments> parts(n_chunks);
    parallel_for(n_chunks, workers, [&](std::size_t c) {
        Stream rng = make_stream(seed, tag, c);
        parts[c] = body(rng, chunk_size(total, c));
    });
    Moments all;
    for (const auto& p : parts) all.merge(p);
    return all;
}

void require_paths(std::uint64_t n, std::uint64_t min_n, const char* what) {
    if (n < min_n)
        throw Error(Status::invalid_argument,
                    std::string(what) + " needs at least " + std::to_string(min_n) + " samples, got " + std::to_string(n));
}

}  // namespace

std::size_t truncation_rows(const FactorModel& model, const CramerSolution* sol, const Truncation& t) {
    if (t.mode == Truncation::Mode::fixed) {
        if (t.fixed_n == 0) throw Error(Status::invalid_argument, "fixed truncation needs N >= 1");
        return t.fixed_n;
    }
    if (!(t.eps > 0.0 && t.eps < 1.0)) throw Error(Status::invalid_argument, "truncation eps must lie in (0, 1)");
    double g = t.gamma;
    if (g == 0.0) g = sol ? 0.5 * sol->alpha : 1.0;
    if (sol && !(g > 0.0 && g < sol->alpha))
        throw Error(Status::invalid_argument, "truncation exponent gamma must lie in (0, alpha)");
    double lh = model.log_h(g);
    if (!(lh < 0.0)) throw Error(Status::invalid_argument, "truncation needs h(gamma) < 1, got gamma = " + fmt(g));
    double need = std::log(t.eps) + std::log(-std::expm1(lh));
    double n1 = std::ceil(need / lh);
    while ((n1)*lh >= need) n1 += 1.0;
    if (n1 > 1e7) throw Error(Status::invalid_argument, "adaptive truncation exceeds 1e7 rows");
    return std::max<std::size_t>(1, static_cast<std::size_t>(n1) - 1);
}

std::vector<double> simulate_Y(const FactorModel& model, const CramerSolution* sol, const SimulationConfig& cfg) {
    require_paths(cfg.n_paths, 1, "simulate_Y");
    const std::size_t rows = truncation_rows(model, sol, cfg.truncation);
    std::vector<double> out(cfg.n_paths);
    std::vector<RowSampler> samplers;
    samplers.reserve(rows);
    for (std::size_t n = 1; n <= rows; ++n) samplers.push_back(model.row_sampler(n, 0.0));
    std::uint64_t n_chunks = chunk_count(cfg.n_paths);
    parallel_for(n_chunks, cfg.workers, [&](std::size_t c) {
        Stream rng = make_stream(cfg.seed, stream_tag("simulate_Y"), c);
        std::uint64_t begin = c * kChunkPaths, count = chunk_size(cfg.n_paths, c);
        for (std::uint64_t i = 0; i < count; ++i) {
            double y = 0.0;
            for (const auto& row : samplers) {
                LogDraw d = row(rng);
                if (d.log_abs > kUnderflowLog) y += d.sign * std::exp(d.log_abs);
            }
            if (!std::isfinite(y)) throw Error(Status::numerical, "simulate_Y: non-finite path value");
            out[begin + i] = y;
        }
    });
    return out;
}

double TailCount::upper_se() const {
    double p = upper();
    return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

double TailCount::lower_se() const {
    double p = lower();
    return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

std::vector<TailCount> count_tails(const std::vector<double>& samples, const std::vector<double>& log_x) {
    if (samples.empty()) throw Error(Status::invalid_argument, "count_tails: empty sample");
    std::vector<TailCount> out;
    for (double L : log_x) {
        double x = std::exp(L);
        TailCount t{L, 0, 0, samples.size()};
        for (double y : samples) {
            if (y > x) ++t.upper_hits;
            if (y < -x) ++t.lower_hits;
        }
        out.push_back(t);
    }
    return out;
}

TiltedEstimate is_tail_pn(const FactorModel& model, const CramerSolution& sol, std::size_t n, double log_x,
                          std::uint64_t n_samples, std::uint64_t seed, unsigned workers) {
    require_paths(n_samples, 100, "is_tail_pn");
    if (n == 0) throw Error(Status::invalid_argument, "is_tail_pn: n must be >= 1");
    if (!(log_x > 0.0)) throw Error(Status::domain, "x must exceed 1");
    const double a = sol.alpha;
    const double n_log_h = static_cast<double>(n) * model.log_h(a);
    const RowSampler row = model.row_sampler(n, a);
    // Weights are scaled by x^alpha so they stay in (0, 1] up to the h(alpha) residual.
    Moments mom = chunked_moments(n_samples, seed, stream_tag("is_tail_pn") + n, workers, [&](Stream& rng, std::uint64_t count) {
        Moments m;
        for (std::uint64_t i = 0; i < count; ++i) {
            LogDraw d = row(rng);
            m.add(d.sign > 0 && d.log_abs > log_x ? std::exp(-a * (d.log_abs - log_x) + n_log_h) : 0.0);
        }
        return m;
    });
    double scale = std::exp(-a * log_x);
    TiltedEstimate e;
    e.value = mom.mean() * scale;
    e.std_error = mom.std_error() * scale;
    e.n_samples = mom.count;
    e.per_n.push_back(PerNEstimate{n, e.value, e.std_error, e.n_samples});
    return e;
}

TiltedEstimate is_tail_pn_signed(const FactorModel& model, const CramerSolution& sol, std::size_t i, double log_x,
                                 std::uint64_t n_samples, std::uint64_t seed, unsigned workers) {
    require_paths(n_samples, 100, "is_tail_pn_signed");
    if (i == 0) throw Error(Status::invalid_argument, "is_tail_pn_signed: block index must be >= 1");
    if (!(log_x > 0.0)) throw Error(Status::domain, "x must exceed 1");
    const double a = sol.alpha;
    const double log_h = model.log_h(a);
    const auto* mix = std::get_if<SignedMixture>(&model.kind());
    Moments mom = chunked_moments(n_samples, seed, stream_tag("is_tail_pn_signed") + i, workers, [&](Stream& rng, std::uint64_t count) {
        Moments m;
        for (std::uint64_t k = 0; k < count; ++k) {
            double w = 0.0;
            std::size_t factors = 0;
            if (mix) {
                // Signs independent of magnitude: K of the i blocks start negative and each of
                // those runs a geometric number of extra factors until the sign flips back.
                std::binomial_distribution<std::uint64_t> long_blocks(i, mix->q);
                std::uint64_t kl = long_blocks(rng);
                std::uint64_t extra = 0;
                if (kl > 0) {
                    std::negative_binomial_distribution<std::uint64_t> stay(kl, mix->q);
                    extra = stay(rng);
                }
                factors = i + kl + extra;
                w = mix->base->sample_row(factors, a, rng).log_abs;
                m.add(w > log_x ? std::exp(-a * (w - log_x) + static_cast<double>(factors) * log_h) : 0.0);
                continue;
            }
            for (std::size_t b = 0; b < i; ++b) {
                StoppedChainSample s = sample_stopped_chain(model, sol, rng, Measure::tilted);
                w += s.w;
                factors += s.n1;
            }
            m.add(w > log_x ? std::exp(-a * (w - log_x) + static_cast<double>(factors) * log_h) : 0.0);
        }
        return m;
    });
    double scale = std::exp(-a * log_x);
    TiltedEstimate e;
    e.value = mom.mean() * scale;
    e.std_error = mom.std_error() * scale;
    e.n_samples = mom.count;
    e.per_n.push_back(PerNEstimate{i, e.value, e.std_error, e.n_samples});
    return e;
}

TiltedEstimate is_tail_p(const FactorModel& model, const CramerSolution& sol, double log_x, const TailSumOptions& opts) {
    if (!(log_x > 0.0)) throw Error(Status::domain, "x must exceed 1");
    if (opts.stopped_chain && !model.is_signed())
        throw Error(Status::invalid_argument, "stopped-chain summation needs a signed model");
    std::size_t n_max = opts.n_max ? opts.n_max : adaptive_horizon(model, sol, log_x, opts.rel_tol);
    TiltedEstimate total;
    double var = 0.0;
    for (std::size_t n = 1; n <= n_max; ++n) {
        TiltedEstimate e = opts.stopped_chain
                               ? is_tail_pn_signed(model, sol, n, log_x, opts.samples_per_n, opts.seed, opts.workers)
                               : is_tail_pn(model, sol, n, log_x, opts.samples_per_n, opts.seed, opts.workers);
        total.value += e.value;
        var += e.std_error * e.std_error;
        total.n_samples += e.n_samples;
        total.per_n.push_back(e.per_n.front());
    }
    total.std_error = std::sqrt(var);
    total.truncation_bound = markov_remainder(model, sol, log_x, n_max);
    return total;
}

double brute_force_p(const FactorModel& model, double log_x, std::size_t n_max) {
    if (n_max > 10000) throw Error(Status::invalid_argument, "brute_force_p: n_max must not exceed 10^4");
    const TwoPoint* tp = std::get_if<TwoPoint>(&model.kind());
    double flip_q = 0.0;
    if (!tp) {
        if (const auto* sm = std::get_if<SignedMixture>(&model.kind())) {
            tp = std::get_if<TwoPoint>(&sm->base->kind());
            flip_q = sm->q;
        }
    }
    if (!tp) throw Error(Status::unsupported, "brute_force_p needs a two_point model (optionally sign-mixed)");
    const double la = std::log(std::fabs(tp->a)), lb = std::log(std::fabs(tp->b));
    const double lpa = tp->p_a > 0.0 ? std::log(tp->p_a) : -std::numeric_limits<double>::infinity();
    const double lpb = tp->p_a < 1.0 ? std::log1p(-tp->p_a) : -std::numeric_limits<double>::infinity();
    double sum = 0.0, comp = 0.0;
    auto kahan_add = [&](double v) {
        double y = v - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    };
    for (std::size_t n = 1; n <= n_max; ++n) {
        const double even_flips = flip_q > 0.0 ? 0.5 * (1.0 + std::pow(1.0 - 2.0 * flip_q, static_cast<double>(n))) : 1.0;
        for (std::size_t k = 0; k <= n; ++k) {
            if (static_cast<double>(k) * la + static_cast<double>(n - k) * lb <= log_x) continue;
            int sign = 1;
            if (tp->a < 0.0 && (k & 1u)) sign = -sign;
            if (tp->b < 0.0 && ((n - k) & 1u)) sign = -sign;
            double p_sign = sign > 0 ? even_flips : 1.0 - even_flips;
            if (p_sign <= 0.0) continue;
            double lp = special::log_binomial(static_cast<unsigned>(n), static_cast<unsigned>(k));
            if (k > 0) lp += static_cast<double>(k) * lpa;
            if (n - k > 0) lp += static_cast<double>(n - k) * lpb;
            if (std::isfinite(lp)) kahan_add(std::exp(lp) * p_sign);
        }
    }
    return sum;
}

StoppedChainSample sample_stopped_chain(const FactorModel& model, const CramerSolution& sol, Stream& rng, Measure measure) {
    const double t = measure == Measure::tilted ? sol.alpha : 0.0;
    StoppedChainSample s{0.0, 0};
    int sign = 1;
    do {
        if (s.n1 >= kStepGuard) throw Error(Status::guard, "stopped chain exceeded 10^6 steps");
        LogDraw d = model.sample_log(t, rng);
        s.w += d.log_abs;
        sign *= d.sign;
        ++s.n1;
    } while (sign < 0);
    return s;
}

TiltedEstimate simulate_ruin(const FactorModel& model, const CramerSolution* sol, double log_x,
                             const SimulationConfig& cfg, const RuinOptions& opts) {
    if (!(log_x > 0.0)) throw Error(Status::domain, "x must exceed 1");
    require_paths(cfg.n_paths, 1, "simulate_ruin");
    TiltedEstimate e;
    if (model.ess_sup_abs() <= 1.0) {
        // |Pi'_n| <= 1 < x on every path.
        e.n_samples = cfg.n_paths;
        return e;
    }
    if (!sol) throw Error(Status::invalid_argument, "simulate_ruin needs a Cramér solution");
    const double a = sol->alpha;
    const double log_h = model.log_h(a);
    const bool need_positive = model.is_signed() && !opts.absolute;
    Moments mom = chunked_moments(cfg.n_paths, cfg.seed, stream_tag(opts.absolute ? "ruin_abs" : "ruin"), cfg.workers,
                                  [&](Stream& rng, std::uint64_t count) {
                                      Moments m;
                                      for (std::uint64_t i = 0; i < count; ++i) {
                                          double s = 0.0;
                                          int sign = 1;
                                          for (std::size_t k = 1;; ++k) {
                                              if (k > kStepGuard) throw Error(Status::guard, "ruin path exceeded 10^6 steps");
                                              LogDraw d = model.sample_log(a, rng);
                                              s += d.log_abs;
                                              sign *= d.sign;
                                              if (s > log_x && (!need_positive || sign > 0)) {
                                                  m.add(std::exp(-a * (s - log_x) + static_cast<double>(k) * log_h));
                                                  break;
                                              }
                                          }
                                      }
                                      return m;
                                  });
    double scale = std::exp(-a * log_x);
    e.value = mom.mean() * scale;
    e.std_error = mom.std_error() * scale;
    e.n_samples = mom.count;
    return e;
}

LindleyStats simulate_lindley(const FactorModel& model, std::size_t n_steps, const SimulationConfig& cfg,
                              const std::vector<double>& u_grid) {
    require_paths(cfg.n_paths, 1, "simulate_lindley");
    if (n_steps == 0) throw Error(Status::invalid_argument, "simulate_lindley: n_steps must be >= 1");
    struct Part {
        std::uint64_t zero_hits = 0;
        double min_v = std::numeric_limits<double>::infinity();
        double max_v = -std::numeric_limits<double>::infinity();
        std::vector<std::uint64_t> exceed, clusters;
        std::vector<Moments> rate;
    };
    const std::size_t nu = u_grid.size();
    std::uint64_t n_chunks = chunk_count(cfg.n_paths);
    std::vector<Part> parts(n_chunks);
    parallel_for(n_chunks, cfg.workers, [&](std::size_t c) {
        Stream rng = make_stream(cfg.seed, stream_tag("lindley"), c);
        Part p;
        p.exceed.assign(nu, 0);
        p.clusters.assign(nu, 0);
        p.rate.assign(nu, Moments{});
        std::vector<std::uint64_t> in_cycle(nu, 0), path_exceed(nu, 0);
        auto close_cycle = [&] {
            for (std::size_t j = 0; j < nu; ++j) {
                if (in_cycle[j]) ++p.clusters[j];
                in_cycle[j] = 0;
            }
        };
        std::uint64_t count = chunk_size(cfg.n_paths, c);
        for (std::uint64_t i = 0; i < count; ++i) {
            double s = 0.0;
            std::fill(path_exceed.begin(), path_exceed.end(), 0);
            for (std::size_t t = 0; t < n_steps; ++t) {
                s = std::max(s + model.sample_log(0.0, rng).log_abs, 0.0);
                p.min_v = std::min(p.min_v, s);
                p.max_v = std::max(p.max_v, s);
                if (s == 0.0) {
                    ++p.zero_hits;
                    close_cycle();
                    continue;
                }
                for (std::size_t j = 0; j < nu; ++j) {
                    if (s > u_grid[j]) {
                        ++p.exceed[j];
                        ++in_cycle[j];
                        ++path_exceed[j];
                    }
                }
            }
            close_cycle();
            for (std::size_t j = 0; j < nu; ++j)
                p.rate[j].add(static_cast<double>(path_exceed[j]) / static_cast<double>(n_steps));
        }
        parts[c] = std::move(p);
    });
    LindleyStats st;
    st.n_paths = cfg.n_paths;
    st.n_steps = n_steps;
    st.min_value = std::numeric_limits<double>::infinity();
    st.max_value = -std::numeric_limits<double>::infinity();
    std::vector<std::uint64_t> exceed(nu, 0), clusters(nu, 0);
    std::vector<Moments> rate(nu);
    for (const auto& p : parts) {
        st.zero_hits += p.zero_hits;
        st.min_value = std::min(st.min_value, p.min_v);
        st.max_value = std::max(st.max_value, p.max_v);
        for (std::size_t j = 0; j < nu; ++j) {
            exceed[j] += p.exceed[j];
            clusters[j] += p.clusters[j];
            rate[j].merge(p.rate[j]);
        }
    }
    for (std::size_t j = 0; j < nu; ++j) {
        double mean = clusters[j] ? static_cast<double>(exceed[j]) / static_cast<double>(clusters[j]) : 0.0;
        st.levels.push_back(LindleyLevel{u_grid[j], exceed[j], clusters[j], mean, rate[j].mean(), rate[j].std_error()});
    }
    return st;
}

double ev_normalizer(const CramerSolution& sol, double n) {
    if (!(n >= 2.0)) throw Error(Status::invalid_argument, "ev_normalizer needs n >= 2");
    if (sol.is_signed) throw Error(Status::unsupported, "ev_normalizer is defined for the unsigned regime");
    return std::pow(2.0 * n * std::log(n) / (sol.alpha * sol.m_alpha), 1.0 / sol.alpha);
}

double ev_normalizer_renewal(const CramerSolution& sol, double n) {
    if (!(n >= 1.0)) throw Error(Status::invalid_argument, "ev_normalizer_renewal needs n >= 1");
    return std::pow(n / (sol.alpha * sol.m_tilde), 1.0 / sol.alpha);
}

Estimate goldie_constant(const FactorModel& model, const CramerSolution& sol, const SimulationConfig& cfg) {
    if (model.is_signed()) throw Error(Status::unsupported, "goldie_constant covers nonnegative models only");
    require_paths(cfg.n_paths, 2, "goldie_constant");
    const double a = sol.alpha;
    Moments mom = chunked_moments(cfg.n_paths, cfg.seed, stream_tag("goldie"), cfg.workers, [&](Stream& rng, std::uint64_t count) {
        Moments m;
        for (std::uint64_t i = 0; i < count; ++i) {
            double y = 1.0;
            for (std::size_t t = 0; t < kGoldieBurnIn; ++t) y = model.sample(rng) * y + 1.0;
            double z = model.sample(rng) * y;
            if (!std::isfinite(z)) throw Error(Status::guard, "goldie_constant: Y' burn-in did not stay finite");
            double v = z > 1.0 ? std::pow(z, a) * std::expm1(a * std::log1p(1.0 / z)) : std::pow(z + 1.0, a) - std::pow(z, a);
            m.add(v);
        }
        return m;
    });
    return Estimate{mom.mean(), mom.std_error(), mom.count};
}

}  // namespace perp
