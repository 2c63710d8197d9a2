#include "perp/multivariate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "perp/errors.hpp"
#include "perp/parallel.hpp"

namespace perp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(Status::invalid_argument, what);
}

// Product of sampled matrices kept as a normalized matrix times e^{log_scale}.
struct ProductTracker {
    Mat p;
    double log_scale = 0.0;

    explicit ProductTracker(std::size_t d) : p(Mat::Identity(d, d)) {}
    void mul(const Mat& x) {
        p = p * x;
        double mx = p.cwiseAbs().maxCoeff();
        if (!(mx > 0.0)) throw Error(Status::numerical, "matrix product collapsed to zero");
        p /= mx;
        log_scale += std::log(mx);
    }
    double log_norm() const { return log_scale + std::log(operator_norm(p)); }
};

// Streaming log-sum-exp of values v and 2v.
struct LseAcc {
    double max = kNegInf;
    double s1 = 0.0;
    double s2 = 0.0;
    std::uint64_t n = 0;

    void add(double v) {
        if (v > max) {
            double r = std::exp(max - v);
            s1 *= r;
            s2 *= r * r;
            max = v;
        }
        double e = std::exp(v - max);
        s1 += e;
        s2 += e * e;
        ++n;
    }
    void merge(const LseAcc& o) {
        if (o.n == 0) return;
        if (n == 0) {
            *this = o;
            return;
        }
        double m = std::max(max, o.max);
        double ra = std::exp(max - m), rb = std::exp(o.max - m);
        s1 = s1 * ra + o.s1 * rb;
        s2 = s2 * ra * ra + o.s2 * rb * rb;
        max = m;
        n += o.n;
    }
    double log_mean() const { return max + std::log(s1 / static_cast<double>(n)); }
    // Relative variance of the summands.
    double rel_var() const {
        double nd = static_cast<double>(n);
        double m1 = s1 / nd, m2 = s2 / nd;
        return std::max(m2 / (m1 * m1) - 1.0, 0.0);
    }
};

std::uint64_t chunk_len(std::uint64_t total, std::uint64_t c) {
    return std::min<std::uint64_t>(kChunkPaths, total - c * kChunkPaths);
}

// log-norms of prefix products at depths d1 < d2 for each path.
void sample_log_norms(const MatrixEnsemble& ens, std::size_t d1, std::size_t d2, std::uint64_t n, std::uint64_t seed,
                      std::uint64_t tag, unsigned workers, std::vector<double>& l1, std::vector<double>& l2) {
    l1.assign(n, 0.0);
    l2.assign(n, 0.0);
    std::uint64_t chunks = chunk_count(n);
    parallel_for(chunks, workers, [&](std::size_t c) {
        Stream rng = make_stream(seed, tag, c);
        std::uint64_t begin = c * kChunkPaths, count = chunk_len(n, c);
        for (std::uint64_t i = 0; i < count; ++i) {
            ProductTracker pt(ens.dim());
            for (std::size_t k = 1; k <= d2; ++k) {
                pt.mul(ens.sample(rng));
                if (k == d1) l1[begin + i] = pt.log_norm();
            }
            l2[begin + i] = pt.log_norm();
        }
    });
}

double log_mean_exp(const std::vector<double>& l, double s) {
    double mx = kNegInf;
    for (double v : l) mx = std::max(mx, s * v);
    double sum = 0.0;
    for (double v : l) sum += std::exp(s * v - mx);
    return mx + std::log(sum / static_cast<double>(l.size()));
}

struct Term {
    double coef;
    double s;
    const std::vector<double>* l;
};

// Delta-method standard error of sum_k coef_k log E[e^{s_k l_k}] from per-path influence values.
double delta_se(const std::vector<Term>& terms) {
    const std::size_t n = terms.front().l->size();
    std::vector<double> lm;
    for (const auto& t : terms) lm.push_back(log_mean_exp(*t.l, t.s));
    Moments mom;
    for (std::size_t i = 0; i < n; ++i) {
        double inf = 0.0;
        for (std::size_t k = 0; k < terms.size(); ++k) {
            const auto& t = terms[k];
            inf += t.coef * (std::exp(t.s * (*t.l)[i] - lm[k]) - 1.0);
        }
        mom.add(inf);
    }
    return mom.std_error();
}

}  // namespace

MatrixEnsemble MatrixEnsemble::from_entries(const std::vector<std::vector<EntrySpec>>& entries) {
    std::size_t d = entries.size();
    require(d >= 2 && d <= static_cast<std::size_t>(kMaxDim), "ensemble dimension must lie in [2, 8]");
    for (const auto& row : entries) {
        require(row.size() == d, "ensemble entries must form a square d x d grid");
        bool positive = false;
        for (const auto& e : row) {
            if (const double* c = std::get_if<double>(&e)) {
                require(std::isfinite(*c) && *c >= 0.0, "constant matrix entries must be finite and >= 0");
                positive = positive || *c > 0.0;
            } else {
                require(!std::get<FactorModel>(e).is_signed(), "matrix entry models must be nonnegative");
                positive = true;
            }
        }
        require(positive, "ensemble has an a.s. zero row");
    }
    MatrixEnsemble ens;
    ens.d_ = d;
    ens.entries_ = entries;
    return ens;
}

MatrixEnsemble MatrixEnsemble::from_atoms(const std::vector<MatrixAtom>& atoms) {
    require(!atoms.empty(), "ensemble needs at least one atom");
    auto d = static_cast<std::size_t>(atoms.front().matrix.rows());
    require(d >= 2 && d <= static_cast<std::size_t>(kMaxDim), "ensemble dimension must lie in [2, 8]");
    double total = 0.0;
    MatrixEnsemble ens;
    ens.d_ = d;
    for (const auto& a : atoms) {
        require(static_cast<std::size_t>(a.matrix.rows()) == d && static_cast<std::size_t>(a.matrix.cols()) == d,
                "all atoms must be d x d");
        require(std::isfinite(a.prob) && a.prob > 0.0, "atom probabilities must be positive");
        require(a.matrix.allFinite() && (a.matrix.array() >= 0.0).all(), "atom entries must be finite and >= 0");
        for (std::size_t r = 0; r < d; ++r) require(a.matrix.row(static_cast<Eigen::Index>(r)).maxCoeff() > 0.0, "atom has a zero row");
        total += a.prob;
        ens.cumulative_.push_back(total);
    }
    require(std::fabs(total - 1.0) < 1e-9, "atom probabilities must sum to 1");
    ens.cumulative_.back() = 1.0;
    ens.atoms_ = atoms;
    return ens;
}

Mat MatrixEnsemble::sample(Stream& rng) const {
    const auto d = static_cast<Eigen::Index>(d_);
    if (!atoms_.empty()) {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        double u = unif(rng);
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), atoms_.size() - 1);
        return scale_ == 1.0 ? atoms_[idx].matrix : Mat(atoms_[idx].matrix * scale_);
    }
    Mat m(d, d);
    for (Eigen::Index r = 0; r < d; ++r) {
        for (Eigen::Index c = 0; c < d; ++c) {
            const EntrySpec& e = entries_[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            if (const double* v = std::get_if<double>(&e)) {
                m(r, c) = *v * scale_;
            } else {
                m(r, c) = std::get<FactorModel>(e).sample(rng) * scale_;
            }
        }
    }
    return m;
}

MatrixEnsemble MatrixEnsemble::scaled(double c) const {
    require(std::isfinite(c) && c > 0.0, "scale factor must be positive");
    MatrixEnsemble e = *this;
    e.scale_ *= c;
    return e;
}

double operator_norm(const Mat& m, double rel_tol) {
    const auto d = m.cols();
    Mat a = m.transpose() * m;
    Vec v = Vec::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));
    double lambda = 0.0;
    for (int it = 0; it < 1000; ++it) {
        Vec w = a * v;
        double next = v.dot(w);
        double nw = w.norm();
        if (!(nw > 0.0)) return 0.0;
        v = w / nw;
        if (std::fabs(next - lambda) <= rel_tol * std::fabs(next)) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    return std::sqrt(std::max(lambda, 0.0));
}

HEstimate estimate_h(const MatrixEnsemble& ens, double s, std::size_t depth, std::uint64_t n_samples,
                     std::uint64_t seed, unsigned workers) {
    require(s >= 0.0, "estimate_h needs s >= 0");
    require(depth >= 1, "depth must be >= 1");
    require(n_samples >= 2, "estimate_h needs at least 2 samples");
    if (s == 0.0) return HEstimate{1.0, 0.0};
    std::uint64_t chunks = chunk_count(n_samples);
    std::vector<LseAcc> parts(chunks);
    parallel_for(chunks, workers, [&](std::size_t c) {
        Stream rng = make_stream(seed, stream_tag("estimate_h") + depth, c);
        LseAcc acc;
        std::uint64_t count = chunk_len(n_samples, c);
        for (std::uint64_t i = 0; i < count; ++i) {
            ProductTracker pt(ens.dim());
            for (std::size_t k = 0; k < depth; ++k) pt.mul(ens.sample(rng));
            acc.add(s * pt.log_norm());
        }
        parts[c] = acc;
    });
    LseAcc all;
    for (const auto& p : parts) all.merge(p);
    double rel_se = std::sqrt(all.rel_var() / static_cast<double>(all.n));
    if (rel_se > 0.5)
        throw Error(Status::numerical, "unstable h estimate at s = " + fmt(s) + ": relative SE " + fmt(rel_se) + " > 0.5");
    double value = std::exp(all.log_mean() / static_cast<double>(depth));
    return HEstimate{value, value * rel_se / static_cast<double>(depth)};
}

LyapunovEstimate estimate_lyapunov(const MatrixEnsemble& ens, std::size_t depth, std::uint64_t n_samples,
                                   std::uint64_t seed, unsigned workers, std::size_t max_depth) {
    require(depth >= 1, "depth must be >= 1");
    require(n_samples >= 2, "estimate_lyapunov needs at least 2 samples");
    auto at_depth = [&](std::size_t dep) {
        std::uint64_t chunks = chunk_count(n_samples);
        std::vector<Moments> parts(chunks);
        parallel_for(chunks, workers, [&](std::size_t c) {
            Stream rng = make_stream(seed, stream_tag("lyapunov") + dep, c);
            Moments m;
            std::uint64_t count = chunk_len(n_samples, c);
            for (std::uint64_t i = 0; i < count; ++i) {
                // Slope over the second half of the product; the O(1/n) start-up bias of
                // log ||Pi_n|| / n cancels in the difference.
                ProductTracker pt(ens.dim());
                double half = 0.0;
                for (std::size_t k = 0; k < dep; ++k) {
                    if (k == dep / 2) half = pt.log_norm();
                    pt.mul(ens.sample(rng));
                }
                m.add((pt.log_norm() - half) / static_cast<double>(dep - dep / 2));
            }
            parts[c] = m;
        });
        Moments all;
        for (const auto& p : parts) all.merge(p);
        return LyapunovEstimate{all.mean(), all.std_error(), dep};
    };
    LyapunovEstimate cur = at_depth(depth);
    while (cur.depth * 2 <= max_depth) {
        LyapunovEstimate next = at_depth(cur.depth * 2);
        // Products with several competing directions converge like 1/sqrt(n), so a pure SE test
        // never settles at large sample sizes; 5% relative movement is enough to fix the sign.
        double tol = std::max(std::hypot(next.std_error, cur.std_error), 0.05 * std::fabs(cur.gamma));
        bool stable = std::fabs(next.gamma - cur.gamma) <= tol;
        cur = next;
        if (stable) break;
    }
    if (cur.gamma > 3.0 * cur.std_error)
        throw Error(Status::numerical, "Lyapunov exponent estimate " + fmt(cur.gamma) + " is positive beyond 3 SE");
    return cur;
}

const char* mv_method_name(MvMethod m) noexcept { return m == MvMethod::direct ? "direct" : "resampled"; }

MvMethod mv_method_from_name(const std::string& name) {
    if (name == "resampled") return MvMethod::resampled;
    if (name == "direct") return MvMethod::direct;
    throw Error(Status::invalid_argument, "unknown multivariate method '" + name + "' (resampled, direct)");
}

namespace {

constexpr std::size_t kSmcReplicates = 16;

struct GrowthRate {
    double log_h = 0.0;
    double log_h_se = 0.0;
    double m = 0.0;
    double m_se = 0.0;
    double log_short = 0.0;  // log E|Pi'_{depth/2} x|^s
};

// Particle estimate of log h(s) as the per-step growth of E|Pi'_n x|^s, x = (1,..,1)/sqrt(d). Each step
// weights particles by |A y|^s and resamples, so the estimate never rests on a handful of paths. m(s) is
// the tilted mean of log|Pi'_n x| per step; it needs the whole path, so each particle carries its
// ancestral sum of log|A y| through the resampling (the per-step filter average is biased). Replicate
// populations give the standard errors. Stream use does not depend on s, so curves in s share draws.
GrowthRate smc_growth(const MatrixEnsemble& ens, double s, std::size_t depth, std::uint64_t n_particles,
                      std::uint64_t seed, unsigned workers) {
    const auto d = static_cast<Eigen::Index>(ens.dim());
    const std::size_t half = depth / 2;
    const std::size_t per = static_cast<std::size_t>(std::max<std::uint64_t>(n_particles / kSmcReplicates, 16));
    std::vector<double> rate(kSmcReplicates), drift(kSmcReplicates), shrt(kSmcReplicates);
    parallel_for(kSmcReplicates, workers, [&](std::size_t r) {
        Stream rng = make_stream(seed, stream_tag("smc_growth") + depth, r);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::vector<Vec> y(per, Vec::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)))), next(per);
        std::vector<double> lw(per), lg(per), cum(per), path(per, 0.0), path_next(per);
        double acc_rate = 0.0, acc_short = 0.0;
        for (std::size_t k = 1; k <= depth; ++k) {
            double mx = kNegInf;
            for (std::size_t i = 0; i < per; ++i) {
                Vec z = ens.sample(rng) * y[i];
                double nz = z.norm();
                if (nz > 0.0) {
                    y[i] = z / nz;
                    lg[i] = std::log(nz);
                    lw[i] = s * lg[i];
                } else {
                    lg[i] = 0.0;
                    lw[i] = kNegInf;
                }
                mx = std::max(mx, lw[i]);
            }
            if (!(mx > kNegInf)) throw Error(Status::numerical, "every particle was mapped to zero");
            double sum = 0.0;
            for (std::size_t i = 0; i < per; ++i) {
                sum += std::exp(lw[i] - mx);
                cum[i] = sum;
                if (k > half) path[i] += lg[i];
            }
            double log_mean = mx + std::log(sum / static_cast<double>(per));
            if (k <= half) acc_short += log_mean;
            if (k > half) acc_rate += log_mean;
            // systematic resampling
            const double step = sum / static_cast<double>(per);
            double u = unif(rng) * step;
            std::size_t j = 0;
            for (std::size_t i = 0; i < per; ++i) {
                double target = u + static_cast<double>(i) * step;
                while (j + 1 < per && cum[j] < target) ++j;
                next[i] = y[j];
                path_next[i] = path[j];
            }
            y.swap(next);
            path.swap(path_next);
        }
        double acc_m = 0.0;
        for (double v : path) acc_m += v;
        acc_m /= static_cast<double>(per);
        const double measured = static_cast<double>(depth - half);
        rate[r] = acc_rate / measured;
        drift[r] = acc_m / measured;
        shrt[r] = acc_short;
    });
    Moments mr, mm;
    for (std::size_t r = 0; r < kSmcReplicates; ++r) {
        mr.add(rate[r]);
        mm.add(drift[r]);
    }
    GrowthRate g;
    g.log_h = mr.mean();
    g.log_h_se = mr.std_error();
    g.m = mm.mean();
    g.m_se = mm.std_error();
    g.log_short = log_mean_exp(shrt, 1.0);
    return g;
}

double effective_samples(const std::vector<double>& l, double s) {
    double mx = kNegInf;
    for (double v : l) mx = std::max(mx, s * v);
    double s1 = 0.0, s2 = 0.0;
    for (double v : l) {
        double w = std::exp(s * v - mx);
        s1 += w;
        s2 += w * w;
    }
    return s1 * s1 / s2;
}

void check_bracket(double lo, double hi, double flo, double fhi) {
    if (!(flo < 0.0 && fhi > 0.0))
        throw Error(Status::no_root, "bracket failure: log h-hat does not change sign on [" + fmt(lo) + ", " + fmt(hi) +
                                         "] (values " + fmt(flo) + ", " + fmt(fhi) + ")");
}

MultivariateCramer solve_direct(const MatrixEnsemble& ens, const MvSolveOptions& opts) {
    const std::size_t d2 = opts.depth, d1 = opts.depth / 2;
    const double span = static_cast<double>(d2 - d1);
    std::vector<double> l1, l2;
    sample_log_norms(ens, d1, d2, opts.n_samples, opts.seed, stream_tag("solve_alpha_mv") + d2, opts.workers, l1, l2);

    MultivariateCramer mv;
    mv.method = MvMethod::direct;
    mv.n_products = d2;
    mv.n_samples = opts.n_samples;
    Moments slope;
    for (std::size_t i = 0; i < l1.size(); ++i) slope.add((l2[i] - l1[i]) / span);
    mv.lyapunov = slope.mean();
    mv.lyapunov_se = slope.std_error();
    if (mv.lyapunov > 3.0 * mv.lyapunov_se)
        throw Error(Status::numerical, "Lyapunov exponent estimate " + fmt(mv.lyapunov) + " is positive beyond 3 SE");

    // Growth rate between the two depths, so the n-independent prefactor of E||Pi'_n||^s cancels.
    auto log_h = [&](double s) { return (log_mean_exp(l2, s) - log_mean_exp(l1, s)) / span; };
    auto log_h_se = [&](double s) { return delta_se({{1.0 / span, s, &l2}, {-1.0 / span, s, &l1}}); };

    auto thin = [&](double s) {
        double ess = effective_samples(l2, s);
        return Error(Status::numerical, "unstable direct estimate: ||Pi'||^s at s = " + fmt(s) + " rests on " + fmt(ess) +
                                            " effective samples of " + std::to_string(opts.n_samples) +
                                            "; use the resampled method or a smaller depth");
    };
    double lo = opts.bracket_lo, hi = opts.bracket_hi;
    double fhi = log_h(hi);
    // A sign failure caused by a starved mean is not evidence against a root.
    if (!(fhi > 0.0) && effective_samples(l2, hi) < kMinEffectiveSamples) throw thin(hi);
    check_bracket(lo, hi, log_h(lo), fhi);
    while (hi - lo > 1e-10) {
        double mid = 0.5 * (lo + hi);
        if (log_h(mid) > 0.0) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    mv.alpha = 0.5 * (lo + hi);
    if (effective_samples(l2, mv.alpha) < kMinEffectiveSamples) throw thin(mv.alpha);
    const double step = 0.05;
    double sp = mv.alpha + step, sm = std::max(mv.alpha - step, 0.0);
    mv.m_alpha = (log_h(sp) - log_h(sm)) / (sp - sm);
    double w = 1.0 / (span * (sp - sm));
    mv.m_alpha_se = delta_se({{w, sp, &l2}, {-w, sp, &l1}, {-w, sm, &l2}, {w, sm, &l1}});
    if (!(mv.m_alpha > 0.0)) throw Error(Status::numerical, "estimated m(alpha) is not positive: " + fmt(mv.m_alpha));
    mv.alpha_se = log_h_se(mv.alpha) / mv.m_alpha;

    const int grid = 20;
    for (int j = 0; j <= grid; ++j) {
        double s = opts.bracket_hi * j / grid;
        HCurvePoint p{s, 1.0, 0.0, 0.0};
        if (s > 0.0) {
            double lh = log_h(s);
            p.h = std::exp(lh);
            p.std_error = p.h * log_h_se(s);
            p.log_moment_short = log_mean_exp(l1, s);
        }
        mv.h_curve.push_back(p);
    }
    return mv;
}

struct Root {
    double alpha;
    GrowthRate g;
};

// Newton on the convex curve using the estimated derivative, kept inside [a, b].
template <class Eval>
Root newton_root(const Eval& eval, double s, double a, double b) {
    GrowthRate g;
    for (int it = 0; it < 40; ++it) {
        g = eval(s);
        if (g.log_h > 0.0) {
            b = s;
        } else {
            a = s;
        }
        double next = g.m > 0.0 ? s - g.log_h / g.m : 0.5 * (a + b);
        if (!(next > a && next < b)) next = 0.5 * (a + b);
        // Steps below a tenth of the statistical resolution only chase noise.
        double tol = g.m > 0.0 ? std::max(1e-7, 0.1 * g.log_h_se / g.m) : 1e-7;
        if (std::fabs(next - s) < tol || b - a < tol) break;
        s = next;
    }
    return {s, g};
}

MultivariateCramer solve_resampled(const MatrixEnsemble& ens, const MvSolveOptions& opts) {
    auto at_depth = [&](std::size_t depth, std::uint64_t n) {
        return [&, depth, n](double s) { return smc_growth(ens, s, depth, n, opts.seed, opts.workers); };
    };
    MultivariateCramer mv;
    mv.method = MvMethod::resampled;
    mv.n_samples = opts.n_samples;
    std::size_t depth = opts.depth;
    auto eval = at_depth(depth, opts.n_samples);
    GrowthRate g0 = eval(0.0);
    mv.lyapunov = g0.m;
    mv.lyapunov_se = g0.m_se;
    if (mv.lyapunov > 3.0 * mv.lyapunov_se)
        throw Error(Status::numerical, "Lyapunov exponent estimate " + fmt(mv.lyapunov) + " is positive beyond 3 SE");

    const double lo = opts.bracket_lo, hi = opts.bracket_hi;
    check_bracket(lo, hi, eval(lo).log_h, eval(hi).log_h);
    Root cur = newton_root(eval, 0.5 * (lo + hi), lo, hi);
    // Double the depth until the root moves by less than its noise or 1% of itself; the last move is
    // reported as the depth (numerical) error. Reducible ensembles settle slowly since the particle
    // directions drift to the invariant subspaces only diffusively.
    for (int k = 0; k < kMvDoublings; ++k) {
        Root next = newton_root(at_depth(2 * depth, opts.n_samples), cur.alpha, lo, hi);
        double se1 = cur.g.log_h_se / cur.g.m, se2 = next.g.log_h_se / next.g.m;
        double shift = std::fabs(next.alpha - cur.alpha);
        depth *= 2;
        cur = next;
        mv.alpha_depth_error = shift;
        if (shift <= std::max(2.0 * std::hypot(se1, se2), 0.01 * cur.alpha)) break;
    }
    mv.n_products = depth;
    mv.alpha = cur.alpha;
    mv.m_alpha = cur.g.m;
    mv.m_alpha_se = cur.g.m_se;
    if (!(mv.m_alpha > 0.0)) throw Error(Status::numerical, "estimated m(alpha) is not positive: " + fmt(mv.m_alpha));
    mv.alpha_se = cur.g.log_h_se / mv.m_alpha;

    // The curve is for display and horizon bounds, so a quarter of the particles will do.
    // |Pi x| understates ||Pi|| by at most d^{3/2} for nonnegative matrices; keep the bound conservative.
    auto curve_eval = at_depth(depth, std::max<std::uint64_t>(opts.n_samples / 4, 100));
    const double norm_gap = 1.5 * std::log(static_cast<double>(ens.dim()));
    const int grid = 20;
    for (int j = 0; j <= grid; ++j) {
        double sj = opts.bracket_hi * j / grid;
        HCurvePoint p{sj, 1.0, 0.0, 0.0};
        if (sj > 0.0) {
            GrowthRate gj = curve_eval(sj);
            p.h = std::exp(gj.log_h);
            p.std_error = p.h * gj.log_h_se;
            p.log_moment_short = gj.log_short + sj * norm_gap;
        }
        mv.h_curve.push_back(p);
    }
    return mv;
}

}  // namespace

MultivariateCramer solve_alpha_mv(const MatrixEnsemble& ens, const MvSolveOptions& opts) {
    require(opts.depth >= 2, "depth must be >= 2");
    require(opts.n_samples >= 100, "solve_alpha_mv needs at least 100 samples");
    require(opts.bracket_lo > 0.0 && opts.bracket_hi > opts.bracket_lo, "bracket must satisfy 0 < lo < hi");
    return opts.method == MvMethod::direct ? solve_direct(ens, opts) : solve_resampled(ens, opts);
}

double mv_feasible_logx_max(const MultivariateCramer& mv, std::uint64_t n_paths) {
    return std::log(static_cast<double>(n_paths) / (10.0 * mv.alpha * mv.m_alpha)) / mv.alpha;
}

MvTailResult mv_tail_estimates(const MatrixEnsemble& ens, const MultivariateCramer& mv, const std::vector<double>& u,
                               const std::vector<double>& v, const std::vector<double>& log_x_grid,
                               const SimulationConfig& cfg, double rel_tol) {
    const std::size_t d = ens.dim();
    require(u.size() == d && v.size() == d, "u and v must have dimension " + std::to_string(d));
    auto unit_nonneg = [](const std::vector<double>& w) {
        double n2 = 0.0;
        for (double x : w) {
            if (!(x >= 0.0)) return false;
            n2 += x * x;
        }
        return std::fabs(std::sqrt(n2) - 1.0) < 1e-6;
    };
    require(unit_nonneg(u), "u must be a nonnegative unit vector");
    require(unit_nonneg(v), "v must be a nonnegative unit vector");
    require(!log_x_grid.empty(), "x grid must be nonempty");
    require(cfg.n_paths >= 100, "mv_tail_estimates needs at least 100 paths");
    std::vector<double> grid = log_x_grid;
    std::sort(grid.begin(), grid.end());
    require(grid.front() > 0.0, "x grid must exceed 1");
    double feasible = mv_feasible_logx_max(mv, cfg.n_paths);
    if (grid.back() > feasible)
        throw InfeasibleError("log x = " + fmt(grid.back()) + " too deep for plain Monte Carlo with " +
                                  std::to_string(cfg.n_paths) + " paths; feasible log x in (0, " + fmt(feasible) + "]",
                              0.0, feasible);

    std::size_t n_max = 0;
    if (cfg.truncation.mode == Truncation::Mode::fixed) {
        require(cfg.truncation.fixed_n >= 1, "fixed truncation needs N >= 1");
        n_max = cfg.truncation.fixed_n;
    } else {
        const double L = grid.back();
        n_max = static_cast<std::size_t>(std::ceil(1.5 * L / mv.m_alpha));
        const double d1 = static_cast<double>(mv.n_products / 2);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : mv.h_curve) {
            if (!(p.s > 0.0 && p.s < mv.alpha && p.h < 1.0)) continue;
            double lh = std::log(p.h);
            double log_c = std::max(p.log_moment_short - d1 * lh, 0.0);
            // x^{-s} C h^{N+1} / (1 - h) <= rel_tol x^{-alpha} / (alpha m)
            double rhs = std::log(rel_tol) - mv.alpha * L - std::log(mv.alpha * mv.m_alpha) + p.s * L - log_c +
                         std::log1p(-p.h);
            double need = rhs >= 0.0 ? 0.0 : std::ceil(rhs / lh) - 1.0;
            best = std::min(best, need);
        }
        if (std::isfinite(best)) n_max = std::max(n_max, static_cast<std::size_t>(std::max(best, 1.0)));
        require(n_max <= 100000, "mv horizon exceeds 1e5 steps");
    }

    const std::size_t ng = grid.size();
    struct Acc {
        std::vector<double> su, su2, suv, suv2, sx;
        std::vector<std::uint64_t> hu, huv;
    };
    std::uint64_t chunks = chunk_count(cfg.n_paths);
    std::vector<Acc> parts(chunks);
    Vec u0(static_cast<Eigen::Index>(d)), vv(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
        u0(static_cast<Eigen::Index>(i)) = u[i];
        vv(static_cast<Eigen::Index>(i)) = v[i];
    }
    parallel_for(chunks, cfg.workers, [&](std::size_t c) {
        Stream rng = make_stream(cfg.seed, stream_tag("mv_tail"), c);
        Acc a;
        a.su.assign(ng, 0.0);
        a.su2 = a.suv = a.suv2 = a.sx = a.su;
        a.hu.assign(ng, 0);
        a.huv.assign(ng, 0);
        std::vector<std::uint64_t> cu(ng), cuv(ng);
        std::uint64_t count = chunk_len(cfg.n_paths, c);
        for (std::uint64_t i = 0; i < count; ++i) {
            std::fill(cu.begin(), cu.end(), 0);
            std::fill(cuv.begin(), cuv.end(), 0);
            Vec z = u0;
            double log_scale = 0.0;
            for (std::size_t k = 0; k < n_max; ++k) {
                z = ens.sample(rng).transpose() * z;
                double nz = z.norm();
                if (!(nz > 0.0)) break;
                z /= nz;
                log_scale += std::log(nz);
                double proj = vv.dot(z);
                double log_proj = proj > 0.0 ? log_scale + std::log(proj) : -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < ng && grid[j] < log_scale; ++j) ++cu[j];
                for (std::size_t j = 0; j < ng && grid[j] < log_proj; ++j) ++cuv[j];
            }
            for (std::size_t j = 0; j < ng; ++j) {
                double x = static_cast<double>(cu[j]), y = static_cast<double>(cuv[j]);
                a.su[j] += x;
                a.su2[j] += x * x;
                a.suv[j] += y;
                a.suv2[j] += y * y;
                a.sx[j] += x * y;
                a.hu[j] += cu[j];
                a.huv[j] += cuv[j];
            }
        }
        parts[c] = std::move(a);
    });

    MvTailResult res;
    res.n_max = n_max;
    res.n_paths = cfg.n_paths;
    const double n = static_cast<double>(cfg.n_paths);
    for (std::size_t j = 0; j < ng; ++j) {
        double su = 0, su2 = 0, suv = 0, suv2 = 0, sx = 0;
        std::uint64_t hu = 0, huv = 0;
        for (const auto& a : parts) {
            su += a.su[j];
            su2 += a.su2[j];
            suv += a.suv[j];
            suv2 += a.suv2[j];
            sx += a.sx[j];
            hu += a.hu[j];
            huv += a.huv[j];
        }
        MvTailPoint p{};
        p.log_x = grid[j];
        p.p_u = su / n;
        p.p_uv = suv / n;
        double var_u = std::max(su2 / n - p.p_u * p.p_u, 0.0);
        double var_uv = std::max(suv2 / n - p.p_uv * p.p_uv, 0.0);
        double cov = sx / n - p.p_u * p.p_uv;
        p.se_u = std::sqrt(var_u / n);
        p.se_uv = std::sqrt(var_uv / n);
        p.hits_u = hu;
        p.hits_uv = huv;
        if (p.p_u > 0.0) {
            p.ratio = p.p_uv / p.p_u;
            double rel = var_uv / (p.p_uv * p.p_uv) + var_u / (p.p_u * p.p_u) - 2.0 * cov / (p.p_u * p.p_uv);
            p.ratio_se = p.p_uv > 0.0 ? p.ratio * std::sqrt(std::max(rel, 0.0) / n) : 0.0;
        } else {
            p.ratio = std::numeric_limits<double>::quiet_NaN();
            p.ratio_se = std::numeric_limits<double>::quiet_NaN();
        }
        res.points.push_back(p);
    }
    return res;
}

}  // namespace perp
