#pragma once

// Fisher information per detected photon about the separation d of two weak
// incoherent point sources whose centroid diffuses, for two measurements:
// Hermite-Gauss spatial-mode sorting (counts per mode) and direct imaging
// (intensity on the focal plane).  All results are reported as the
// dimensionless combination w^2 F; the quantum limit in these units is 1.
//
// Derivatives are taken in x = d/(2w), so F_d = (dp/dd)^2/p sums become
// w^2 F = (1/4) sum (dp/dx)^2 / p.
//
// Also here: the two-term asymptotic expansions in tau and x, the
// tau = kappa^2 x^(2q) scaling analysis, the minimal resolvable distance
// d_min = 1/sqrt(N F(d_min)), and the mode-sorting/direct-imaging crossover
// of the long-time x^2 coefficients.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "brownian.hpp"
#include "optics.hpp"
#include "quadrature.hpp"
#include "special_functions.hpp"

namespace spade {

struct FisherResult {
    double fi_per_photon = 0.0;  // w^2 F, dimensionless
    std::string method;  // closed_form_derivative | finite_difference | quadrature | asymptotic
    double x = 0.0;
    double tau = 0.0;
    int modes_M = 0;  // 0 when mode count does not apply (direct imaging)
    double error_estimate = 0.0;
};

// sqrt(tau) = kappa * x^q ties the diffusion budget to the separation being
// resolved; kappa <= 1 keeps the per-cycle blur below the feature size.
struct ScalingSpec {
    double q = 1.0;
    double kappa = 1.0;
};

enum class Regime { short_time, long_time };

namespace detail {

inline void check_scaling(const ScalingSpec& sc, const char* who) {
    if (!(sc.q > 0.0))
        throw std::invalid_argument(std::string(who) + ": requires q > 0");
    if (!(sc.kappa > 0.0 && sc.kappa <= 1.0))
        throw std::invalid_argument(std::string(who) + ": requires kappa in (0, 1]");
}

// One Fisher term (dp)^2/p with first-order error propagation.
struct FiAccum {
    double fi = 0.0;
    double err = 0.0;
    void add(double p, double dp, double p_err, double dp_err) {
        fi += dp * dp / p;
        err += 2.0 * std::abs(dp) * dp_err / p + (dp / p) * (dp / p) * p_err;
    }
};

}  // namespace detail

// FI per photon of the mode-sorting measurement over modes n,m <= M.  The
// default uses only the listed mode probabilities (their sum stays below 1;
// the complement is discarded).  include_bucket adds the complement as one
// extra detection channel.  k_alignment = T/t_a restricts arrivals to the
// post-alignment window [t_a, T].
inline FisherResult fi_spade(double x, double tau, int M = 1,
                             std::optional<double> k_alignment = std::nullopt,
                             bool include_bucket = false) {
    if (!(x > 0.0)) throw std::invalid_argument("fi_spade: requires x > 0");
    if (!(tau >= 0.0)) throw std::invalid_argument("fi_spade: requires tau >= 0");
    if (M < 1 || M > 3) throw std::invalid_argument("fi_spade: M must be 1, 2 or 3");
    if (k_alignment && !(*k_alignment > 1.0))
        throw std::invalid_argument("fi_spade: k_alignment must exceed 1");

    FisherResult out;
    out.x = x;
    out.tau = tau;
    out.modes_M = M;

    if (M == 1) {
        // Closed forms carry analytic derivatives; the alignment window is
        // the exact two-point combination of full-window kernels.
        detail::ClosedKernel ker = detail::closed_kernel(x, tau);
        if (k_alignment) {
            const double k = *k_alignment;
            const detail::ClosedKernel ka = detail::closed_kernel(x, tau / k);
            auto mix = [&](double full, double early) {
                return (k * full - early) / (k - 1.0);
            };
            ker.p00 = mix(ker.p00, ka.p00);
            ker.p10 = mix(ker.p10, ka.p10);
            ker.p11 = mix(ker.p11, ka.p11);
            ker.bucket = mix(ker.bucket, ka.bucket);
            ker.dp00 = mix(ker.dp00, ka.dp00);
            ker.dp10 = mix(ker.dp10, ka.dp10);
            ker.dp11 = mix(ker.dp11, ka.dp11);
            ker.dbucket = mix(ker.dbucket, ka.dbucket);
        }
        detail::FiAccum acc;
        const double rel = closed_form_rel_error;
        acc.add(ker.p00, ker.dp00, rel * ker.p00, rel * std::abs(ker.dp00));
        // (1,0) and (0,1) are degenerate channels; each contributes.
        for (int rep = 0; rep < 2; ++rep)
            acc.add(ker.p10, ker.dp10, rel * ker.p10, rel * std::abs(ker.dp10));
        acc.add(ker.p11, ker.dp11, rel * ker.p11, rel * std::abs(ker.dp11));
        if (include_bucket && ker.bucket > 0.0)
            acc.add(ker.bucket, ker.dbucket, rel * ker.bucket, rel * std::abs(ker.dbucket));
        out.fi_per_photon = acc.fi / 4.0;
        out.error_estimate = acc.err / 4.0 + 1e-15;
        out.method = "closed_form_derivative";
        return out;
    }

    // M >= 2: probabilities by quadrature, d/dx by fourth-order central
    // differences.  The step must dominate the quadrature noise yet stay
    // inside the domain.
    const double h = std::max(1e-6, 1e-3 * x);
    if (!(x - 2.0 * h > 0.0))
        throw precision_error("fi_spade: finite-difference step underflows x", 0.0);
    const double ta = k_alignment ? 1.0 / *k_alignment : 0.0;

    const AveragedProbabilities b0 = averaged_probs_quadrature(x, tau, ta, M);
    const AveragedProbabilities bm2 = averaged_probs_quadrature(x - 2.0 * h, tau, ta, M);
    const AveragedProbabilities bm1 = averaged_probs_quadrature(x - h, tau, ta, M);
    const AveragedProbabilities bp1 = averaged_probs_quadrature(x + h, tau, ta, M);
    const AveragedProbabilities bp2 = averaged_probs_quadrature(x + 2.0 * h, tau, ta, M);

    const double p_err = b0.error_estimate;
    const double dp_err = 1.5 * std::max({bm2.error_estimate, bm1.error_estimate,
                                          bp1.error_estimate, bp2.error_estimate}) /
                          h;
    const double p_floor = std::max(50.0 * p_err, 1e-14);

    detail::FiAccum acc;
    for (const auto& [idx, p] : b0.probs) {
        if (p <= p_floor) continue;  // noise-dominated channel
        const double dp = (bm2.probs.at(idx) - 8.0 * bm1.probs.at(idx) +
                           8.0 * bp1.probs.at(idx) - bp2.probs.at(idx)) /
                          (12.0 * h);
        acc.add(p, dp, p_err, dp_err);
    }
    if (include_bucket && b0.residual > p_floor) {
        const double dres =
            (bm2.residual - 8.0 * bm1.residual + 8.0 * bp1.residual - bp2.residual) /
            (12.0 * h);
        acc.add(b0.residual, dres, p_err, dp_err);
    }
    out.fi_per_photon = acc.fi / 4.0;
    out.error_estimate = acc.err / 4.0 + 1e-15;
    out.method = "finite_difference";
    return out;
}

// FI per photon of direct imaging.  The photon density on the focal plane is
// radially symmetric after orientation averaging:
//   p(r) = < (2/(pi beta)) exp(-2(r - a)^2/beta) i0e(4 r a / beta) >_{c,u},
// a = x sqrt(1-c^2), beta = 1 + 8 tau u (the PSF variance w^2/4 grown by the
// Brownian variance 2Dt, per axis).  Both p and dp/dx are smooth in c and u
// (even functions of a), so fixed Gauss-Legendre rules converge spectrally;
// the radial integral of (dp/dx)^2/p is adaptive with a reported tail bound.
inline FisherResult fi_direct_imaging(double x, double tau) {
    if (!(x > 0.0)) throw std::invalid_argument("fi_direct_imaging: requires x > 0");
    if (!(tau >= 0.0)) throw std::invalid_argument("fi_direct_imaging: requires tau >= 0");

    const GlRule& rule = gauss_legendre(64);
    const int n = static_cast<int>(rule.x.size());
    // Nodes on [0,1] for u and c.
    std::vector<double> t01(n), w01(n);
    for (int i = 0; i < n; ++i) {
        t01[i] = 0.5 * (rule.x[i] + 1.0);
        w01[i] = 0.5 * rule.w[i];
    }

    // Accumulates p and dp/dx of the mixture at radius r.
    auto mixture = [&](double r, double& p, double& dp) {
        p = 0.0;
        dp = 0.0;
        const int nu = (tau == 0.0) ? 1 : n;
        for (int iu = 0; iu < nu; ++iu) {
            const double beta = (tau == 0.0) ? 1.0 : 1.0 + 8.0 * tau * t01[iu];
            const double wu = (tau == 0.0) ? 1.0 : w01[iu];
            const double pref = 2.0 / (pi * beta);
            for (int ic = 0; ic < n; ++ic) {
                const double c = t01[ic];
                const double s = std::sqrt(1.0 - c * c);
                const double a = x * s;
                const double e = std::exp(-2.0 * (r - a) * (r - a) / beta);
                const double z = 4.0 * r * a / beta;
                const double i0 = bessel_i0e(z);
                const double i1 = bessel_i1e(z);
                const double wgt = wu * w01[ic] * pref * e;
                p += wgt * i0;
                dp += wgt * s * (4.0 / beta) * (r * i1 - a * i0);
            }
        }
    };

    const double rmax = 8.0 * std::sqrt(1.0 + 4.0 * tau);
    auto integrand = [&](double r) {
        double p, dp;
        mixture(r, p, dp);
        if (p <= 0.0) return 0.0;
        return 2.0 * pi * r * dp * dp / p;
    };
    const QuadResult rad = integrate_gk(integrand, 0.0, rmax, 1e-13, 1e-8);

    // Tail: beyond rmax the integrand decays at least as fast as the widest
    // Gaussian component, rate 4(rmax - x)/beta_max per unit radius.
    const double beta_max = 1.0 + 8.0 * tau;
    const double lam = 4.0 * (rmax - std::min(x, rmax * 0.5)) / beta_max;
    const double tail = integrand(rmax) * 2.0 / lam;

    FisherResult out;
    out.fi_per_photon = rad.value / 4.0;
    out.method = "quadrature";
    out.x = x;
    out.tau = tau;
    out.modes_M = 0;
    out.error_estimate = (rad.abs_error + tail) / 4.0 + 1e-15;
    return out;
}

// Two-term expansions of w^2 F for mode sorting.
//   short time (tau << x^2):  2/3 - 2 tau/x^2
//   long time  (x^2 << tau):  (2/(9 tau) - 43/27) x^2
// With an alignment window k = T/t_a both terms acquire window factors; the
// early-time share of the blur is removed, which raises the short-time value
// toward 2/3 and lowers both long-time coefficients:
//   short: 2/3 - 2 (k+1) tau / (k x^2)
//   long:  (2/(9 tau) - 2/(9 k tau) - 43/27 - 23/(27 k)) x^2
inline double fi_asymptotic_spade(double x, double tau, Regime regime,
                                  std::optional<double> k_alignment = std::nullopt) {
    if (k_alignment && !(*k_alignment > 1.0))
        throw std::invalid_argument("fi_asymptotic_spade: k_alignment must exceed 1");
    if (regime == Regime::short_time) {
        if (k_alignment) {
            const double k = *k_alignment;
            return 2.0 / 3.0 - 2.0 * (k + 1.0) * tau / (k * x * x);
        }
        return 2.0 / 3.0 - 2.0 * tau / (x * x);
    }
    if (k_alignment) {
        const double k = *k_alignment;
        return (2.0 / (9.0 * tau) - 2.0 / (9.0 * k * tau) - 43.0 / 27.0 -
                23.0 / (27.0 * k)) *
               x * x;
    }
    return (2.0 / (9.0 * tau) - 43.0 / 27.0) * x * x;
}

// Three-term expansion of w^2 F for direct imaging, valid for x, sqrt(tau) << 1.
inline double fi_asymptotic_direct(double x, double tau) {
    return x * x * (16.0 / 9.0 - 128.0 * tau / 9.0 + 1792.0 * tau * tau / 27.0);
}

// FI along the sweep tau = kappa^2 x^(2q).  For q = 1 the x -> 0 limit is
// 2 / (3 (1 + 3 kappa^2)).
inline FisherResult fi_with_scaling(double x, const ScalingSpec& scaling, int M = 1) {
    detail::check_scaling(scaling, "fi_with_scaling");
    const double tau = scaling.kappa * scaling.kappa * std::pow(x, 2.0 * scaling.q);
    return fi_spade(x, tau, M);
}

namespace detail {

// Solves 2 x sqrt(N phi(x)) = 1 (phi = w^2 F) by bisection on x = d/(2w);
// returns d/w.  The bracket is d/w in [1e-6, 10].
template <typename TauOfX>
double min_distance_impl(long long n_photons, TauOfX&& tau_of_x, int M) {
    if (n_photons < 1)
        throw std::invalid_argument("min_resolvable_distance: requires N >= 1");
    const double N = static_cast<double>(n_photons);
    auto g = [&](double xx) {
        const double phi = fi_spade(xx, tau_of_x(xx), M).fi_per_photon;
        return 2.0 * xx * std::sqrt(N * phi) - 1.0;
    };
    double lo = 5e-7, hi = 5.0;
    double glo = g(lo), ghi = g(hi);
    if (glo * ghi > 0.0) {
        std::ostringstream msg;
        msg << "min_resolvable_distance: no sign change in bracket; g(d/w=1e-6) = "
            << glo << ", g(d/w=10) = " << ghi
            << " (separation unresolvable at this N)";
        throw std::runtime_error(msg.str());
    }
    while (hi - lo > 5e-7 * (lo + hi)) {
        const double mid = 0.5 * (lo + hi);
        if ((g(mid) < 0.0) == (glo < 0.0))
            lo = mid;
        else
            hi = mid;
    }
    return lo + hi;  // d/w = 2x at the midpoint
}

}  // namespace detail

// Smallest separation (in units of w) satisfying d = 1/sqrt(N F(d)) for a
// fixed tau, i.e. the point where the shot-noise-limited estimator error
// equals the separation itself.
inline double min_resolvable_distance(long long n_photons, double tau, int M = 1) {
    if (!(tau >= 0.0))
        throw std::invalid_argument("min_resolvable_distance: requires tau >= 0");
    return detail::min_distance_impl(n_photons, [tau](double) { return tau; }, M);
}

// Same fixed point with tau tied to the trial separation, tau = kappa^2 x^(2q).
inline double min_resolvable_distance(long long n_photons, const ScalingSpec& scaling,
                                      int M = 1) {
    detail::check_scaling(scaling, "min_resolvable_distance");
    return detail::min_distance_impl(
        n_photons,
        [&](double xx) {
            return scaling.kappa * scaling.kappa * std::pow(xx, 2.0 * scaling.q);
        },
        M);
}

// sqrt(tau) at which the long-time x^2 coefficients of mode sorting,
// 2/(9 tau) - 43/27, and of direct imaging, 16/9 - 128 tau/9 + 1792 tau^2/27,
// coincide: the positive root of 1792 tau^3 - 384 tau^2 + 91 tau - 6 in
// (0, 0.2).  Mode sorting keeps the larger coefficient below this point.
inline double spade_di_crossover() {
    auto poly = [](double t) {
        return ((1792.0 * t - 384.0) * t + 91.0) * t - 6.0;
    };
    auto dpoly = [](double t) { return (5376.0 * t - 768.0) * t + 91.0; };
    double t = 0.084;
    for (int i = 0; i < 60; ++i) {
        const double step = poly(t) / dpoly(t);
        t -= step;
        if (std::abs(step) <= 1e-16 * t) break;
    }
    return std::sqrt(t);
}

}  // namespace spade
