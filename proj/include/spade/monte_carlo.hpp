#pragma once

// End-to-end simulation of the adaptive measurement cycle: the centroid is
// realigned at t = 0, photons arrive at Poisson times while it diffuses, each
// is sorted into a Hermite-Gauss mode or the residual bucket, and the
// separation is recovered from the aggregated counts by maximum likelihood.
// Serves as the sampling oracle for the closed-form and quadrature
// probabilities and for the Cramer-Rao comparison.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "brownian.hpp"
#include "fisher.hpp"
#include "optics.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "special_functions.hpp"

namespace spade {

// One emission event from the time-averaged ensemble.
struct TrajectorySample {
    double emission_time = 0.0;          // in [t_a, T]
    std::array<double, 2> mu_vec{};      // centroid offset, per-axis N(0, 2Dt)
    double phi = 0.0;                    // pair-axis azimuth, uniform on [0, 2pi)
    double theta = 0.0;                  // pair-axis polar angle, cos uniform on [-1, 1]
    int source_index = 1;                // 1 with probability nu, else 2
};

struct ExperimentRecord {
    std::map<ModeIndex, long long> counts;
    long long bucket_count = 0;
    long long n_cycles = 0;
    SystemConfig truth;
    std::uint64_t seed = 0;
};

struct MleResult {
    double d_hat = 0.0;          // same units as truth.separation_d
    double loglik = 0.0;
    bool converged = false;
    double stderr_estimate = 0.0;
};

namespace detail {

inline void check_config(const SystemConfig& cfg, const char* who) {
    if (!(cfg.psf_width_w > 0.0))
        throw std::invalid_argument(std::string(who) + ": psf_width_w must be positive");
    if (!(cfg.cycle_time_T > 0.0))
        throw std::invalid_argument(std::string(who) + ": cycle_time_T must be positive");
    if (!(cfg.alignment_time_ta >= 0.0 && cfg.alignment_time_ta < cfg.cycle_time_T))
        throw std::invalid_argument(std::string(who) + ": needs 0 <= t_a < T");
    if (!(cfg.diffusion_D >= 0.0))
        throw std::invalid_argument(std::string(who) + ": diffusion_D must be nonnegative");
    if (!(cfg.separation_d >= 0.0))
        throw std::invalid_argument(std::string(who) + ": separation_d must be nonnegative");
    if (!(cfg.brightness_nu >= 0.0 && cfg.brightness_nu <= 1.0))
        throw std::invalid_argument(std::string(who) + ": brightness_nu must lie in [0, 1]");
}

// Draw order per event: t, mu_x, mu_y, cos(theta), phi, source.  mu draws are
// skipped when D = 0, so matched seeds stay aligned across nu or x changes.
inline TrajectorySample draw_trajectory(const SystemConfig& cfg, RandomStream& rs) {
    TrajectorySample s;
    s.emission_time = rs.uniform(cfg.alignment_time_ta, cfg.cycle_time_T);
    if (cfg.diffusion_D > 0.0) {
        const double sig = std::sqrt(2.0 * cfg.diffusion_D * s.emission_time);
        s.mu_vec[0] = sig * rs.gaussian();
        s.mu_vec[1] = sig * rs.gaussian();
    }
    s.theta = std::acos(rs.uniform(-1.0, 1.0));
    s.phi = rs.uniform(0.0, 2.0 * pi);
    s.source_index = (rs.uniform() < cfg.brightness_nu) ? 1 : 2;
    return s;
}

// Mode weights conditional on one trajectory: q_nm = overlap_f^2 with
// a = r_source / w, plus the complement bucket.  Categorical draw walks
// (n, m) in lexicographic order.
inline void assign_mode(const SystemConfig& cfg, const TrajectorySample& s, int M,
                        RandomStream& rs, std::vector<long long>& counts,
                        long long& bucket) {
    const double w = cfg.psf_width_w;
    const double xt = (cfg.separation_d / (2.0 * w)) * std::sin(s.theta);
    const double sgn = (s.source_index == 1) ? -1.0 : 1.0;
    const double ax = s.mu_vec[0] / w + sgn * xt * std::cos(s.phi);
    const double ay = s.mu_vec[1] / w + sgn * xt * std::sin(s.phi);
    const double e = std::exp(-(ax * ax + ay * ay));

    const double u = rs.uniform();
    double cum = 0.0;
    double qx = e;  // (ax^2)^n / n! running along the row
    for (int n = 0; n <= M; ++n) {
        if (n > 0) qx *= ax * ax / n;
        double q = qx;
        for (int m = 0; m <= M; ++m) {
            if (m > 0) q *= ay * ay / m;
            cum += q;
            if (u < cum) {
                ++counts[static_cast<std::size_t>(n) * (M + 1) + m];
                return;
            }
        }
    }
    ++bucket;
}

// One cycle in the correlated variant: a single Brownian path sampled at
// sorted Poisson arrival times, one shared pair-axis orientation.
inline void run_correlated_cycle(const SystemConfig& cfg, int M, RandomStream& rs,
                                 std::vector<long long>& counts, long long& bucket,
                                 double mean_photons) {
    const long long n = rs.poisson(mean_photons);
    if (n == 0) return;
    const double theta = std::acos(rs.uniform(-1.0, 1.0));
    const double phi = rs.uniform(0.0, 2.0 * pi);
    std::vector<double> times(static_cast<std::size_t>(n));
    for (auto& t : times) t = rs.uniform(cfg.alignment_time_ta, cfg.cycle_time_T);
    std::sort(times.begin(), times.end());
    TrajectorySample s;
    s.theta = theta;
    s.phi = phi;
    double prev = 0.0;
    for (const double t : times) {
        if (cfg.diffusion_D > 0.0) {
            const double sig = std::sqrt(2.0 * cfg.diffusion_D * (t - prev));
            s.mu_vec[0] += sig * rs.gaussian();
            s.mu_vec[1] += sig * rs.gaussian();
        }
        prev = t;
        s.emission_time = t;
        s.source_index = (rs.uniform() < cfg.brightness_nu) ? 1 : 2;
        assign_mode(cfg, s, M, rs, counts, bucket);
    }
}

inline int thread_count(long long n_cycles) {
    int n = 0;
    if (const char* env = std::getenv("SPADE_THREADS")) n = std::atoi(env);
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    return static_cast<int>(std::min<long long>(n, n_cycles));
}

}  // namespace detail

// One event from the time-averaged Brownian ensemble.
inline TrajectorySample sample_trajectory(const SystemConfig& cfg, std::uint64_t rng_seed) {
    detail::check_config(cfg, "sample_trajectory");
    RandomStream rs(rng_seed);
    return detail::draw_trajectory(cfg, rs);
}

// Full experiment: n_cycles realignment cycles, Poisson photon numbers, one
// categorical mode draw per photon over modes n,m <= M plus the bucket.
// Cycle i uses stream i of the seed, so results are independent of the
// execution order and of the thread count.  correlated_paths makes the
// photons of one cycle ride a single Brownian path (one orientation, state
// carried between arrivals) instead of drawing independent snapshots.
inline ExperimentRecord simulate_cycles(const SystemConfig& cfg, long long n_cycles,
                                        double mean_photons_per_cycle, int M,
                                        std::uint64_t rng_seed,
                                        bool correlated_paths = false) {
    detail::check_config(cfg, "simulate_cycles");
    if (n_cycles < 1) throw std::invalid_argument("simulate_cycles: n_cycles must be >= 1");
    if (!(mean_photons_per_cycle >= 0.0))
        throw std::invalid_argument("simulate_cycles: mean photon number must be >= 0");
    if (M < 0 || M > max_mode_order)
        throw std::invalid_argument("simulate_cycles: M out of range");

    const std::size_t nmodes = static_cast<std::size_t>(M + 1) * (M + 1);
    const int nthreads = detail::thread_count(n_cycles);

    std::vector<std::vector<long long>> part(nthreads, std::vector<long long>(nmodes, 0));
    std::vector<long long> part_bucket(nthreads, 0);

    auto worker = [&](int tid, long long lo, long long hi) {
        for (long long i = lo; i < hi; ++i) {
            RandomStream rs(rng_seed, static_cast<std::uint64_t>(i));
            if (correlated_paths) {
                detail::run_correlated_cycle(cfg, M, rs, part[tid], part_bucket[tid],
                                             mean_photons_per_cycle);
            } else {
                const long long n = rs.poisson(mean_photons_per_cycle);
                for (long long j = 0; j < n; ++j) {
                    const TrajectorySample s = detail::draw_trajectory(cfg, rs);
                    detail::assign_mode(cfg, s, M, rs, part[tid], part_bucket[tid]);
                }
            }
        }
    };

    if (nthreads == 1) {
        worker(0, 0, n_cycles);
    } else {
        std::vector<std::thread> pool;
        const long long step = (n_cycles + nthreads - 1) / nthreads;
        for (int t = 0; t < nthreads; ++t)
            pool.emplace_back(worker, t, t * step, std::min<long long>((t + 1) * step, n_cycles));
        for (auto& th : pool) th.join();
    }

    ExperimentRecord rec;
    rec.n_cycles = n_cycles;
    rec.truth = cfg;
    rec.seed = rng_seed;
    for (int n = 0; n <= M; ++n)
        for (int m = 0; m <= M; ++m) {
            long long c = 0;
            for (int t = 0; t < nthreads; ++t)
                c += part[t][static_cast<std::size_t>(n) * (M + 1) + m];
            rec.counts[{n, m}] = c;
        }
    for (int t = 0; t < nthreads; ++t) rec.bucket_count += part_bucket[t];
    return rec;
}

namespace detail {

// Model probabilities for the likelihood: closed forms when the record covers
// only modes n,m <= 1, quadrature otherwise.
inline AveragedProbabilities model_probs(double x, double tau, double ta_frac, int M) {
    if (M <= 1 && ta_frac == 0.0) {
        AveragedProbabilities out = averaged_probs_closed_form(x, tau);
        if (M == 0) {
            const double p00 = out.probs.at({0, 0});
            out.probs.clear();
            out.probs[{0, 0}] = p00;
            out.residual = 1.0 - p00;
        }
        return out;
    }
    return averaged_probs_quadrature(x, tau, ta_frac, M);
}

}  // namespace detail

// Maximum-likelihood separation from aggregated counts, with tau treated as
// known.  Maximizes sum counts_nm log p_nm + bucket log(residual) over
// x = d/(2w) in [1e-4, 5] by golden section plus one parabolic refinement.
// A maximum pinned to either end of the bracket is reported converged=false.
inline MleResult mle_separation(const ExperimentRecord& record, double model_tau, int M) {
    if (!(model_tau >= 0.0))
        throw std::invalid_argument("mle_separation: model_tau must be >= 0");
    if (M < 0 || M > max_mode_order)
        throw std::invalid_argument("mle_separation: M out of range");

    const double w = record.truth.psf_width_w;
    const double ta_frac = record.truth.alignment_time_ta / record.truth.cycle_time_T;

    long long total = record.bucket_count;
    for (const auto& [idx, c] : record.counts) {
        if (c < 0) throw std::invalid_argument("mle_separation: negative count");
        if (idx.n > M || idx.m > M)
            throw std::invalid_argument("mle_separation: record holds modes beyond M");
        total += c;
    }
    MleResult out;
    if (total == 0) return out;  // no photons, nothing to estimate

    auto loglik = [&](double x) {
        const AveragedProbabilities mp = detail::model_probs(x, model_tau, ta_frac, M);
        double ll = 0.0;
        for (const auto& [idx, c] : record.counts) {
            if (c == 0) continue;
            const double p = mp.probs.at(idx);
            if (!(p > 0.0)) return -1e300;
            ll += static_cast<double>(c) * std::log(p);
        }
        if (record.bucket_count > 0) {
            if (!(mp.residual > 0.0)) return -1e300;
            ll += static_cast<double>(record.bucket_count) * std::log(mp.residual);
        }
        return ll;
    };

    // Golden section on [lo, hi], keeping the larger of the two probes.
    double lo = 1e-4, hi = 5.0;
    const double gr = 0.61803398874989484820;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = loglik(x1), f2 = loglik(x2);
    for (int it = 0; it < 90 && hi - lo > 1e-9 * (1.0 + lo); ++it) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = loglik(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = loglik(x1);
        }
    }
    double xh = (f1 > f2) ? x1 : x2;
    double fh = std::max(f1, f2);

    // Parabolic polish through (xh-h, xh, xh+h) inside the bracket.
    {
        const double h = std::max(1e-7, 1e-5 * xh);
        if (xh - h > 1e-4 && xh + h < 5.0) {
            const double fm = loglik(xh - h), fp = loglik(xh + h);
            const double denom = fm - 2.0 * fh + fp;
            if (denom < 0.0) {
                const double step = 0.5 * h * (fm - fp) / denom;
                if (std::abs(step) < h) {
                    const double xc = xh + step;
                    const double fc = loglik(xc);
                    if (fc >= fh) {
                        xh = xc;
                        fh = fc;
                    }
                }
            }
        }
    }

    out.d_hat = 2.0 * xh * w;
    out.loglik = fh;
    out.converged = (xh > 1e-4 * (1.0 + 1e-3) && xh < 5.0 * (1.0 - 1e-6));
    if (out.converged) {
        std::optional<double> k;
        if (ta_frac > 0.0) k = 1.0 / ta_frac;
        // The likelihood uses the bucket channel, so its information bound
        // does too.  The bound caps mode depth at 3; beyond that the extra
        // information is negligible and the stderr stays mildly conservative.
        const double phi =
            fi_spade(xh, model_tau, std::clamp(M, 1, 3), k, true).fi_per_photon;
        if (phi > 0.0)
            out.stderr_estimate = w / std::sqrt(static_cast<double>(total) * phi);
    }
    return out;
}

// Fisher information estimated from simulation alone: empirical mode
// frequencies at x +- delta, centered differences, binomial error
// propagation.  Channels whose slope is indistinguishable from counting
// noise are dropped; if every channel drowns, a precision_error advises a
// larger delta or more photons.
inline FisherResult empirical_fisher(double x, double tau, double delta, int M,
                                     long long n_photons, std::uint64_t rng_seed) {
    if (!(delta > 0.0))
        throw std::domain_error("empirical_fisher: delta must be positive");
    if (!(x - delta > 0.0))
        throw std::domain_error("empirical_fisher: needs x - delta > 0");
    if (n_photons < 1)
        throw std::invalid_argument("empirical_fisher: n_photons must be >= 1");
    if (M < 0 || M > max_mode_order)
        throw std::invalid_argument("empirical_fisher: M out of range");

    SystemConfig cfg;  // w = T = 1, so tau maps to D and x to d directly
    cfg.diffusion_D = tau;
    auto stratum = [&](double xx, std::uint64_t seed) {
        cfg.separation_d = 2.0 * xx;
        const long long cycles = std::max<long long>(1, n_photons / 100000);
        return simulate_cycles(cfg, cycles,
                               static_cast<double>(n_photons) / static_cast<double>(cycles),
                               M, seed);
    };
    const ExperimentRecord lo = stratum(x - delta, rng_seed);
    const ExperimentRecord hi = stratum(x + delta, rng_seed + 0x9e3779b97f4a7c15ull);

    long long nlo = lo.bucket_count, nhi = hi.bucket_count;
    for (const auto& [idx, c] : lo.counts) nlo += c;
    for (const auto& [idx, c] : hi.counts) nhi += c;
    if (nlo == 0 || nhi == 0)
        throw precision_error("empirical_fisher: no photons detected", 0.0);

    double fi = 0.0, err = 0.0;
    bool any_signal = false;
    for (const auto& [idx, clo] : lo.counts) {
        const double plo = static_cast<double>(clo) / static_cast<double>(nlo);
        const double phi = static_cast<double>(hi.counts.at(idx)) / static_cast<double>(nhi);
        const double p = 0.5 * (plo + phi);
        if (p <= 0.0) continue;
        const double dp = (phi - plo) / (2.0 * delta);
        const double var = plo * (1.0 - plo) / static_cast<double>(nlo) +
                           phi * (1.0 - phi) / static_cast<double>(nhi);
        const double dp_err = std::sqrt(var) / (2.0 * delta);
        if (std::abs(dp) < 2.0 * dp_err) continue;  // slope below counting noise
        any_signal = true;
        fi += dp * dp / p;
        const double p_err = 0.5 * std::sqrt(var);
        err += 2.0 * std::abs(dp) * dp_err / p + (dp / p) * (dp / p) * p_err;
    }
    if (!any_signal)
        throw precision_error(
            "empirical_fisher: slopes below counting noise; increase delta or n_photons",
            fi / 4.0);

    FisherResult out;
    out.fi_per_photon = fi / 4.0;
    out.method = "finite_difference";
    out.x = x;
    out.tau = tau;
    out.modes_M = M;
    out.error_estimate = err / 4.0;
    return out;
}

// Kolmogorov-Smirnov helpers for the sampler marginals.  Statistic against
// the uniform law on [a, b]; p-value via the asymptotic Q with the
// Stephens small-sample correction.
inline double ks_uniform_statistic(std::vector<double> v, double a, double b) {
    if (v.empty()) throw std::invalid_argument("ks_uniform_statistic: empty sample");
    if (!(b > a)) throw std::invalid_argument("ks_uniform_statistic: needs b > a");
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double cdf = (v[i] - a) / (b - a);
        d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - cdf));
    }
    return d;
}

inline double ks_pvalue(double d_stat, std::size_t n) {
    const double rn = std::sqrt(static_cast<double>(n));
    return kolmogorov_q((rn + 0.12 + 0.11 / rn) * d_stat);
}

}  // namespace spade
