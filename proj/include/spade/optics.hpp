#pragma once

// Gaussian-beam mode machinery: Hermite-Gauss mode functions, overlap
// amplitudes of a displaced fundamental against the mode basis, and the
// orientation-averaged static (no-diffusion) detection probabilities for the
// low-order modes, together with the static direct-imaging intensity.

#include <cmath>
#include <stdexcept>

#include "spade/special_functions.hpp"

namespace spade {

// Physical description of one measurement campaign.  Lengths share one unit;
// separation_d is the full source separation, psf_width_w the beam waist.
struct SystemConfig {
    double separation_d = 0.0;
    double psf_width_w = 1.0;
    double diffusion_D = 0.0;
    double cycle_time_T = 1.0;
    double brightness_nu = 0.5;    // probability that a photon stems from source 1
    double alignment_time_ta = 0.0;
};

// Snapshot of the nuisance coordinates: centroid offset (mu, psi) in the
// focal plane and pair-axis direction (theta from the optical axis, phi in
// the plane).  The in-plane half separation is x * sin(theta).
struct Pose {
    double mu = 0.0;
    double psi = 0.0;
    double phi = 0.0;
    double theta = 1.5707963267948966;
};

struct ModeIndex {
    int n = 0;
    int m = 0;
    friend constexpr auto operator<=>(ModeIndex, ModeIndex) = default;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline constexpr int max_mode_order = 10;

namespace detail {

inline double checked_factorial(int n) {
    static const double table[] = {1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0,
                                   5040.0, 40320.0, 362880.0, 3628800.0};
    return table[n];
}

inline void check_mode(ModeIndex idx, const char* who) {
    if (idx.n < 0 || idx.m < 0 || idx.n > max_mode_order || idx.m > max_mode_order)
        throw std::invalid_argument(std::string(who) + ": mode order outside [0, 10]");
}

// Physicists' Hermite polynomial by the three-term recurrence.
inline double hermite_phys(int n, double xi) {
    if (n == 0) return 1.0;
    double h0 = 1.0, h1 = 2.0 * xi;
    for (int k = 1; k < n; ++k) {
        const double h2 = 2.0 * xi * h1 - 2.0 * k * h0;
        h0 = h1;
        h1 = h2;
    }
    return h1;
}

}  // namespace detail

// Normalized Hermite-Gauss mode u_nm evaluated at a focal-plane point.
// int |u_nm|^2 d^2r = 1 with the waist convention u_00 ~ exp(-r^2/w^2).
inline double hg_mode(ModeIndex idx, Point p, double w) {
    detail::check_mode(idx, "hg_mode");
    if (!(w > 0.0)) throw std::invalid_argument("hg_mode: waist must be positive");
    const double xi = std::sqrt(2.0) * p.x / w;
    const double eta = std::sqrt(2.0) * p.y / w;
    const double norm = std::sqrt(2.0 / (pi * w * w) /
                                  (std::pow(2.0, idx.n + idx.m) *
                                   detail::checked_factorial(idx.n) *
                                   detail::checked_factorial(idx.m)));
    return norm * detail::hermite_phys(idx.n, xi) * detail::hermite_phys(idx.m, eta) *
           std::exp(-(p.x * p.x + p.y * p.y) / (w * w));
}

// Overlap amplitude <u_nm | fundamental displaced to source position>.
// With a = r_source / w the closed form is a_x^n a_y^m exp(-|a|^2/2)/sqrt(n! m!):
// equal to the defining 2D integral of u_nm times the displaced u_00.
// source selects which emitter of the pair (1 or 2).
inline double overlap_f(ModeIndex idx, const Pose& pose, const SystemConfig& cfg, int source) {
    detail::check_mode(idx, "overlap_f");
    if (source != 1 && source != 2)
        throw std::invalid_argument("overlap_f: source must be 1 or 2");
    const double w = cfg.psf_width_w;
    if (!(w > 0.0)) throw std::invalid_argument("overlap_f: waist must be positive");
    const double x = cfg.separation_d / (2.0 * w);
    const double xt = x * std::sin(pose.theta);
    const double sgn = (source == 1) ? -1.0 : 1.0;
    const double ax = (pose.mu * std::cos(pose.psi) + sgn * xt * w * std::cos(pose.phi)) / w;
    const double ay = (pose.mu * std::sin(pose.psi) + sgn * xt * w * std::sin(pose.phi)) / w;
    double mono = 1.0;
    for (int i = 0; i < idx.n; ++i) mono *= ax;
    for (int i = 0; i < idx.m; ++i) mono *= ay;
    return mono / std::sqrt(detail::checked_factorial(idx.n) * detail::checked_factorial(idx.m)) *
           std::exp(-0.5 * (ax * ax + ay * ay));
}

// Static (no diffusion, perfectly aligned centroid) detection probabilities
// for the modes (0,0), (1,0), (0,1), (1,1) with the pair axis averaged over
// solid angle.  x = d/(2w).  Closed forms in the Dawson integral F:
//   p00 = F(x)/x
//   p10 = p01 = ((1+2x^2)F - x) / (4x)
//   p11 = ((4x^4+4x^2+3)F - 2x^3 - 3x) / (32x)
// with cancellation-free power series used at small x.
namespace detail {

inline constexpr double static_series_cut = 0.5;

inline double static_p00(double x) {
    if (x == 0.0) return 1.0;
    return dawson_value(std::abs(x)) / std::abs(x);
}

inline double static_p10(double x) {
    const double u = std::abs(x);
    if (u <= static_series_cut) {
        // sum_{k>=1} (-1)^(k+1) 2^(k-1) k u^(2k) / (2k+1)!!
        const double u2 = u * u;
        double base = u2 / 3.0;  // 2^(k-1) u^(2k) / (2k+1)!! at k=1, signed below
        double sum = base;
        double sign = 1.0;
        for (int k = 2; k <= 40; ++k) {
            base *= 2.0 * u2 / (2.0 * k + 1.0);
            sign = -sign;
            const double term = sign * base * k;
            sum += term;
            if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
        }
        return sum;
    }
    const double f = dawson_value(u);
    return ((1.0 + 2.0 * u * u) * f - u) / (4.0 * u);
}

inline double static_p11(double x) {
    const double u = std::abs(x);
    if (u <= static_series_cut) {
        // sum_{k>=2} (-1)^k 2^(k-3) k (k-1) u^(2k) / (2k+1)!!
        const double u2 = u * u;
        double base = u2 * u2 / 30.0;  // 2^(k-3) u^(2k) / (2k+1)!! at k=2
        double sum = u2 * u2 / 15.0;   // k=2 term
        double sign = 1.0;
        for (int k = 3; k <= 40; ++k) {
            base *= 2.0 * u2 / (2.0 * k + 1.0);
            sign = -sign;
            const double term = sign * base * k * (k - 1.0);
            sum += term;
            if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
        }
        return sum;
    }
    const double u2 = u * u;
    const double f = dawson_value(u);
    return ((4.0 * u2 * u2 + 4.0 * u2 + 3.0) * f - 2.0 * u2 * u - 3.0 * u) / (32.0 * u);
}

inline double static_bucket(double x) {
    const double u = std::abs(x);
    if (u <= static_series_cut) {
        // sum_{k>=2} -(-1)^k 2^(k-3) (k-1)(k-8) u^(2k) / (2k+1)!!
        const double u2 = u * u;
        double base = u2 * u2 / 30.0;  // 2^(k-3) u^(2k)/(2k+1)!! at k=2
        double sum = -base * 1.0 * (-6.0);
        double sign = 1.0;
        for (int k = 3; k <= 40; ++k) {
            base *= 2.0 * u2 / (2.0 * k + 1.0);
            sign = -sign;
            const double term = -sign * base * (k - 1.0) * (k - 8.0);
            sum += term;
            if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
        }
        return sum;
    }
    return 1.0 - static_p00(u) - 2.0 * static_p10(u) - static_p11(u);
}

inline double static_dp00(double x) {
    const double u = std::abs(x);
    if (u <= static_series_cut) {
        // sum_{k>=1} (-1)^k 2^k (2k) u^(2k-1) / (2k+1)!!
        const double u2 = u * u;
        double base = 2.0 * u / 3.0;  // 2^k u^(2k-1)/(2k+1)!! at k=1
        double sum = -base * 2.0;
        double sign = -1.0;
        for (int k = 2; k <= 40; ++k) {
            base *= 2.0 * u2 / (2.0 * k + 1.0);
            sign = -sign;
            const double term = sign * base * 2.0 * k;
            sum += term;
            if (std::abs(term) <= 1e-18 * std::abs(sum) + 1e-300) break;
        }
        return sum;
    }
    const double f = dawson_value(u);
    return (u - 2.0 * u * u * f - f) / (u * u);
}

inline double static_dp10(double x) {
    const double u = std::abs(x);
    if (u <= static_series_cut) {
        // sum_{k>=1} (-1)^(k+1) 2^k k^2 u^(2k-1) / (2k+1)!!
        const double u2 = u * u;
        double base = 2.0 * u / 3.0;  // 2^k u^(2k-1)/(2k+1)!! at k=1
        double sum = base;
        double sign = 1.0;
        for (int k = 2; k <= 40; ++k) {
            base *= 2.0 * u2 / (2.0 * k + 1.0);
            sign = -sign;
            const double term = sign * base * k * k;
            sum += term;
            if (std::abs(term) <= 1e-18 * std::abs(sum) + 1e-300) break;
        }
        return sum;
    }
    const double u2 = u * u;
    const double f = dawson_value(u);
    return (u + 2.0 * u2 * u - (1.0 + 4.0 * u2 * u2) * f) / (4.0 * u2);
}

inline double static_dp11(double x) {
    const double u = std::abs(x);
    if (u <= static_series_cut) {
        // sum_{k>=2} (-1)^k 2^(k-2) k^2 (k-1) u^(2k-1) / (2k+1)!!
        const double u2 = u * u;
        double base = u2 * u / 15.0;  // 2^(k-2) u^(2k-1)/(2k+1)!! at k=2
        double sum = base * 4.0;
        double sign = 1.0;
        for (int k = 3; k <= 40; ++k) {
            base *= 2.0 * u2 / (2.0 * k + 1.0);
            sign = -sign;
            const double term = sign * base * k * k * (k - 1.0);
            sum += term;
            if (std::abs(term) <= 1e-18 * std::abs(sum) + 1e-300) break;
        }
        return sum;
    }
    const double u2 = u * u;
    const double u4 = u2 * u2;
    const double f = dawson_value(u);
    return (4.0 * u4 * u + 3.0 * u - (8.0 * u4 * u2 - 4.0 * u4 + 2.0 * u2 + 3.0) * f) /
           (32.0 * u2);
}

inline double static_dbucket(double x) {
    return -static_dp00(x) - 2.0 * static_dp10(x) - static_dp11(x);
}

}  // namespace detail

inline double static_mode_prob(ModeIndex idx, double x) {
    detail::check_mode(idx, "static_mode_prob");
    if (idx.n == 0 && idx.m == 0) return detail::static_p00(x);
    if ((idx.n == 1 && idx.m == 0) || (idx.n == 0 && idx.m == 1)) return detail::static_p10(x);
    if (idx.n == 1 && idx.m == 1) return detail::static_p11(x);
    throw std::invalid_argument("static_mode_prob: closed form limited to n,m <= 1");
}

inline double static_mode_prob_derivative(ModeIndex idx, double x) {
    detail::check_mode(idx, "static_mode_prob_derivative");
    if (idx.n == 0 && idx.m == 0) return detail::static_dp00(x);
    if ((idx.n == 1 && idx.m == 0) || (idx.n == 0 && idx.m == 1)) return detail::static_dp10(x);
    if (idx.n == 1 && idx.m == 1) return detail::static_dp11(x);
    throw std::invalid_argument("static_mode_prob_derivative: closed form limited to n,m <= 1");
}

// Static direct-imaging intensity per unit dimensionless area at radius
// rho = r/w from the centroid, for half separation x, pair axis averaged over
// solid angle.  Normalized: int_0^inf 2 pi rho I(rho) drho = 1.
inline double di_intensity_static(double rho, double x) {
    if (rho < 0.0) throw std::invalid_argument("di_intensity_static: negative radius");
    if (x == 0.0) return (2.0 / pi) * std::exp(-2.0 * rho * rho);
    const GlRule& rule = gauss_legendre(64);
    double acc = 0.0;
    for (int i = 0; i < 64; ++i) {
        const double c = 0.5 * (rule.x[i] + 1.0);  // cos(theta) on [0,1]
        const double s = std::sqrt(1.0 - c * c);
        const double xs = x * s;
        const double d = rho - xs;
        acc += 0.5 * rule.w[i] * std::exp(-2.0 * d * d) * bessel_i0e(4.0 * rho * xs);
    }
    return (2.0 / pi) * acc;
}

}  // namespace spade
