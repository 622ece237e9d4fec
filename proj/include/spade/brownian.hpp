#pragma once

// Time-and-ensemble-averaged mode probabilities for a diffusing pair of weak
// point sources.  The centroid performs 2D Brownian motion (per-axis variance
// 2Dt, kernel exp(-mu^2/(4Dt)), normalized), the pair axis is isotropically
// random, and photons arrive uniformly in time over the cycle.  Everything is
// dimensionless: x = d/(2w), tau = D T / w^2.
//
// Two independent evaluation paths are provided:
//  - closed forms for modes (0,0), (1,0), (0,1), (1,1) plus the residual
//    bucket, with analytic x-derivatives, accurate to ~1e-12 relative over
//    the full (x, tau) range by branch selection;
//  - deterministic nested quadrature valid for any mode order, used as the
//    cross-check oracle and for mode orders beyond 1.

#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "spade/optics.hpp"
#include "spade/quadrature.hpp"
#include "spade/special_functions.hpp"

namespace spade {

struct ProbValue {
    double value = 0.0;
    double abs_error = 0.0;
};

struct AveragedProbabilities {
    std::map<ModeIndex, double> probs;
    double residual = 0.0;   // probability outside the listed modes
    double x = 0.0;
    double tau = 0.0;
    std::string method;      // "closed_form", "quadrature" or "monte_carlo"
    double error_estimate = 0.0;
};

struct MisalignmentMoments {
    double mean_mu = 0.0;  // in units of w
    double var_mu = 0.0;   // in units of w^2
};

// Conservative relative accuracy of the closed-form path (validated against
// quadrature in the test suite).
inline constexpr double closed_form_rel_error = 1e-11;

namespace detail {

// g(y) = y + expm1(-y) = y^2/2 - y^3/6 + ...  (series below 0.5 for accuracy)
inline double g_fn(double y) {
    if (std::abs(y) < 0.5) {
        double term = y * y / 2.0, sum = term;
        for (int k = 3; k <= 30; ++k) {
            term *= -y / k;
            sum += term;
            if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
        }
        return sum;
    }
    return y + std::expm1(-y);
}

// g(-y) = -y + expm1(y) = y^2/2 + y^3/6 + ...
inline double g_neg_fn(double y) {
    if (std::abs(y) < 0.5) {
        double term = y * y / 2.0, sum = term;
        for (int k = 3; k <= 30; ++k) {
            term *= y / k;
            sum += term;
            if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
        }
        return sum;
    }
    return std::expm1(y) - y;
}

// h2(y) = y + 2 expm1(-y) - expm1(-2y)/2 = y^3/3 - y^4/4 + 7y^5/60 - ...
inline double h2_fn(double y) {
    if (std::abs(y) < 0.5) {
        // sum_{k>=3} (-1)^k (2 - 2^(k-1)) y^k / k!
        double yk = y * y * y;    // y^k
        double fact = 6.0;        // k!
        double pow2 = 4.0;        // 2^(k-1)
        double sign = -1.0;       // (-1)^k
        double sum = 0.0;
        for (int k = 3; k <= 34; ++k) {
            const double term = sign * (2.0 - pow2) * yk / fact;
            sum += term;
            if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
            yk *= y;
            fact *= k + 1;
            pow2 *= 2.0;
            sign = -sign;
        }
        return sum;
    }
    return y + 2.0 * std::expm1(-y) - 0.5 * std::expm1(-2.0 * y);
}

// Bucket value at x = 0: [4(g(-y) - g(y)) - h2(y)] / (16 tau), y = log(1+4tau).
// Series sum_{k>=3} c_k y^k/k! with c_k = 10-2^(k-1) (k odd), 2^(k-1)-2 (k even).
inline double bucket_at_zero(double tau, double y) {
    if (y <= 0.5) {
        double yk = y * y * y;
        double fact = 6.0;
        double pow2 = 4.0;
        double sum = 0.0;
        for (int k = 3; k <= 34; ++k) {
            const double c = (k % 2 == 1) ? (10.0 - pow2) : (pow2 - 2.0);
            const double term = c * yk / fact;
            sum += term;
            if (std::abs(term) <= 1e-18 * std::abs(sum) && k > 5) break;
            yk *= y;
            fact *= k + 1;
            pow2 *= 2.0;
        }
        return sum / (16.0 * tau);
    }
    return (4.0 * (g_neg_fn(y) - g_fn(y)) - h2_fn(y)) / (16.0 * tau);
}

// All four closed-form mode probabilities, the residual bucket, and their
// x-derivatives at one (x, tau) point.
struct ClosedKernel {
    double p00 = 0, p10 = 0, p11 = 0, bucket = 0;
    double dp00 = 0, dp10 = 0, dp11 = 0, dbucket = 0;
};

inline ClosedKernel closed_kernel_static(double x) {
    ClosedKernel r;
    r.p00 = static_p00(x);
    r.p10 = static_p10(x);
    r.p11 = static_p11(x);
    r.bucket = static_bucket(x);
    r.dp00 = static_dp00(x);
    r.dp10 = static_dp10(x);
    r.dp11 = static_dp11(x);
    r.dbucket = static_dbucket(x);
    return r;
}

inline ClosedKernel closed_kernel(double x, double tau) {
    if (!(x >= 0.0) || !(tau >= 0.0))
        throw std::invalid_argument("closed_kernel: requires x >= 0 and tau >= 0");
    if (tau == 0.0) return closed_kernel_static(x);

    ClosedKernel r;
    const double gam = 1.0 + 4.0 * tau;
    const double L = std::log1p(4.0 * tau);
    const double E1 = std::expm1(-L), E2 = std::expm1(-2.0 * L);
    const double E3 = std::expm1(-3.0 * L), E4 = std::expm1(-4.0 * L);
    const double z = x * x;

    if (x < 1e-4) {
        // Fourth-order expansions in x; exact in tau.
        const double gL = g_fn(L), h2L = h2_fn(L);
        const double g2 = gam * gam, g3 = g2 * gam;
        const double delta = 2.0 * tau / (3.0 * g3);
        const double a2 = (2.0 * E3 - 0.5 * E2 - 1.5 * E4) / (60.0 * tau);
        const double cb = 2.0 * tau * (16.0 * tau + 3.0) / (3.0 * g3);
        // z^2 coefficient of the bucket, forced by the completeness of the
        // four entries: minus the sum of the p00, 2 p10, p11 coefficients.
        const double ab2 =
            2.0 * (g2 + gam + 2.0) / (15.0 * g3) - 2.0 * (gam + 1.0) / (15.0 * g2) - a2;
        r.p00 = L / (4.0 * tau) - (2.0 / (3.0 * gam)) * z + (2.0 * (gam + 1.0) / (15.0 * g2)) * z * z;
        r.p10 = gL / (8.0 * tau) + z / (3.0 * g2) - ((g2 + gam + 2.0) / (15.0 * g3)) * z * z;
        r.p11 = h2L / (16.0 * tau) + delta * z + a2 * z * z;
        r.bucket = bucket_at_zero(tau, L) + cb * z + ab2 * z * z;
        r.dp00 = -(4.0 / (3.0 * gam)) * x + (8.0 * (gam + 1.0) / (15.0 * g2)) * x * z;
        r.dp10 = 2.0 * x / (3.0 * g2) - (4.0 * (g2 + gam + 2.0) / (15.0 * g3)) * x * z;
        r.dp11 = 2.0 * delta * x + 4.0 * a2 * x * z;
        r.dbucket = 2.0 * cb * x + 4.0 * ab2 * x * z;
        return r;
    }

    // Both remaining branches build on the Phi-difference
    //   Delta = Phi(-x^2/gam)/gam - Phi(-x^2)
    // and the Dawson differences K_p = F(x/sqrt(gam)) gam^(-p/2) - F(x),
    // evaluated in cancellation-free form.
    if (x <= 1.0) {
        // Power series: K_p = x (E_(p+1)/2 + S_p) with
        // S_p = sum_{j>=1} (-2)^j x^(2j)/(2j+1)!! expm1(-(2j+1+p)L/2),
        // Sm1 = same with p = -1.  The j = 1 terms are kept apart: paired
        // with the bare E_s terms of p11, dp11 and the bucket they collapse
        // through the exact identities
        //   E1 - 2 E2 + E3        = (4 tau)^2 / gam^3
        //   E2 - 3 E1/2 - E3/6    = (4 tau)^2 (16 tau + 3) / (6 gam^3),
        // removing an O(x^2 L) cancellation that otherwise dominates the
        // rounding error of those entries as x -> 0.
        const double E5 = std::expm1(-5.0 * L);
        const double c1 = -2.0 * z / 3.0;
        double S1r = 0.0, S3r = 0.0, S5r = 0.0, S7r = 0.0, Sm1r = 0.0;
        double cj = c1;
        for (int j = 2; j <= 80; ++j) {
            cj *= -2.0 * z / (2.0 * j + 1.0);
            S1r += cj * std::expm1(-(j + 1.0) * L);
            S3r += cj * std::expm1(-(j + 2.0) * L);
            S5r += cj * std::expm1(-(j + 3.0) * L);
            S7r += cj * std::expm1(-(j + 4.0) * L);
            Sm1r += cj * std::expm1(-static_cast<double>(j) * L);
            const double scale = std::abs(S1r) + std::abs(S3r) + std::abs(S5r) +
                                 std::abs(S7r) + std::abs(Sm1r) + std::abs(c1 * E2);
            if (std::abs(cj) <= 1e-18 * scale && j >= 4) break;
        }
        const double S1 = c1 * E2 + S1r;
        const double S3 = c1 * E3 + S3r;
        const double S5 = c1 * E4 + S5r;
        const double S7 = c1 * E5 + S7r;
        const double Sm1 = c1 * E1 + Sm1r;
        // Delta = E1 + Ds, Ds = sum_{k>=1} a_k (-x^2)^k expm1(-(k+1)L),
        // a_k = 1/((k+1)(5/2)_k)
        double Ds = 0.0;
        double dsum = 0.0;
        double poch = 1.0, zk = 1.0;
        for (int k = 1; k <= 80; ++k) {
            const double zk_prev = zk;
            poch *= 1.5 + k;
            zk *= -z;
            const double a = 1.0 / ((k + 1.0) * poch);
            const double Ek1 = std::expm1(-(k + 1.0) * L);
            const double term = a * zk * Ek1;
            Ds += term;
            dsum += a * k * zk_prev * Ek1;
            if (std::abs(term) <= 1e-18 * (std::abs(Ds) + std::abs(E1)) && k >= 3) break;
        }
        const double Delta = E1 + Ds;
        const double dDelta = -2.0 * x * dsum;

        const double Q = 16.0 * tau * tau / (gam * gam * gam);
        const double W = Q * (16.0 * tau + 3.0) / 6.0;
        const double gL = g_fn(L), h2L = h2_fn(L);
        r.p00 = L / (4.0 * tau) + z * Delta / (6.0 * tau);
        r.p10 = (gL + S1 + (2.0 * z / 3.0) * Delta) / (8.0 * tau);
        r.p11 = (h2L / 4.0 + z * Q / 6.0 + (8.0 * S1r - S3r) / 16.0 + (z / 8.0) * S5 +
                 (z / 6.0) * Ds) /
                (4.0 * tau);
        r.bucket = bucket_at_zero(tau, L) +
                   (z * W - 1.5 * S1r - 1.5 * z * Ds + S3r / 16.0 - (z / 8.0) * S5) /
                       (4.0 * tau);
        r.dp00 = -Sm1 / (2.0 * tau * x);
        r.dp10 =
            ((4.0 * x / 3.0) * Delta + (2.0 * z / 3.0) * dDelta - S1 / x - 2.0 * x * (E2 + S3)) /
            (8.0 * tau);
        r.dp11 = (x * Q / 3.0 + (x / 3.0) * Ds + (z / 6.0) * dDelta - x * S3 +
                  (x / 4.0) * S5 - (x * z / 4.0) * (E4 + S7) - (8.0 * S1r - S3r) / (16.0 * x)) /
                 (4.0 * tau);
        r.dbucket = (2.0 * x * W + 2.0 * Sm1r / x + S1r / x + (8.0 * S1r - S3r) / (16.0 * x) +
                     3.0 * x * S3 - (x / 4.0) * S5 + (x * z / 4.0) * (E4 + S7) -
                     (5.0 * x / 3.0) * Ds - (5.0 * z / 6.0) * dDelta) /
                    (4.0 * tau);
        return r;
    }

    {
        // Explicit Dawson differences.  Taylor expansion of F(v) - F(x) in
        // h = v - x when the window is narrow; direct difference otherwise.
        const double v = x * std::exp(-0.5 * L);
        const double hwin = x * std::expm1(-0.5 * L);  // v - x without endpoint rounding
        const double Fx = dawson_value(x);
        const double Fv = dawson_value(v);
        double FdF;  // F(v) - F(x)
        const bool taylor = z * L <= 2.0;
        if (taylor) {
            const double h = hwin;
            double d_prev = Fx;              // F^(0)
            double d_cur = 1.0 - 2.0 * x * Fx;  // F^(1)
            double hj = h;                   // h^j / j!
            FdF = d_cur * hj;
            for (int j = 1; j <= 40; ++j) {
                const double d_next = -2.0 * j * d_prev - 2.0 * x * d_cur;
                d_prev = d_cur;
                d_cur = d_next;
                hj *= h / (j + 1.0);
                const double term = d_cur * hj;
                FdF += term;
                if (std::abs(term) <= 1e-18 * std::abs(Fx)) break;
            }
        } else {
            FdF = Fv - Fx;
        }
        auto Kp = [&](double p_half_neg_exp) {
            // p_half_neg_exp = expm1(-(p/2) L)
            return Fv * p_half_neg_exp + FdF;
        };
        const double K1 = Kp(std::expm1(-0.5 * L));
        const double K3 = Kp(std::expm1(-1.5 * L));
        const double K5 = Kp(std::expm1(-2.5 * L));
        const double K7 = Kp(std::expm1(-3.5 * L));
        const double Km1 = Kp(std::expm1(0.5 * L));
        const double Ivx = dawson_deficit_integral_offset(x, hwin);
        const double Delta = 3.0 * Ivx / z;
        const double dDelta = -3.0 * Km1 / (z * z) - 6.0 * Ivx / (z * x);

        r.p00 = L / (4.0 * tau) + z * Delta / (6.0 * tau);
        const double one_m_p00 = g_neg_fn(L) / (4.0 * tau) - z * Delta / (6.0 * tau);
        r.p10 = (L + K1 / x + (2.0 * z / 3.0) * Delta) / (8.0 * tau);
        const double TF = (8.0 * K1 - K3 + 2.0 * z * K5) / (16.0 * x);
        r.p11 = (L / 4.0 - E2 / 16.0 + (z / 6.0) * Delta + TF) / (4.0 * tau);
        r.bucket = one_m_p00 - 2.0 * r.p10 - r.p11;
        r.dp00 = -Km1 / (2.0 * tau * z);
        r.dp10 = ((4.0 * x / 3.0) * Delta + (2.0 * z / 3.0) * dDelta - 4.0 * tau / (gam * x) -
                  2.0 * K3 - K1 / z) /
                 (8.0 * tau);
        const double dK1 = -4.0 * tau / gam - 2.0 * x * K3;
        const double dK3 = E2 - 2.0 * x * K5;
        const double dK5 = E3 - 2.0 * x * K7;
        const double dTF = (8.0 * dK1 - dK3 + 4.0 * x * K5 + 2.0 * z * dK5) / (16.0 * x) - TF / x;
        r.dp11 = ((x / 3.0) * Delta + (z / 6.0) * dDelta + dTF) / (4.0 * tau);
        r.dbucket = -r.dp00 - 2.0 * r.dp10 - r.dp11;
        return r;
    }
}

inline void require_closed_mode(ModeIndex idx, const char* who) {
    const bool ok = (idx.n <= 1 && idx.m <= 1 && idx.n >= 0 && idx.m >= 0);
    if (!ok) throw std::invalid_argument(std::string(who) + ": closed forms cover n,m <= 1 only");
}

}  // namespace detail

// Closed-form time-and-ensemble-averaged probability for modes (0,0), (1,0),
// (0,1), (1,1).  tau = 0 reduces to the pure orientation average.
inline double averaged_prob_closed_form(ModeIndex idx, double x, double tau) {
    detail::require_closed_mode(idx, "averaged_prob_closed_form");
    const detail::ClosedKernel k = detail::closed_kernel(x, tau);
    if (idx.n == 0 && idx.m == 0) return k.p00;
    if (idx.n == 1 && idx.m == 1) return k.p11;
    return k.p10;
}

// Analytic d/dx of the closed-form probability.
inline double averaged_prob_closed_form_derivative(ModeIndex idx, double x, double tau) {
    detail::require_closed_mode(idx, "averaged_prob_closed_form_derivative");
    const detail::ClosedKernel k = detail::closed_kernel(x, tau);
    if (idx.n == 0 && idx.m == 0) return k.dp00;
    if (idx.n == 1 && idx.m == 1) return k.dp11;
    return k.dp10;
}

// Complete closed-form bundle: the four modes plus the residual bucket.
inline AveragedProbabilities averaged_probs_closed_form(double x, double tau) {
    const detail::ClosedKernel k = detail::closed_kernel(x, tau);
    AveragedProbabilities out;
    out.probs[{0, 0}] = k.p00;
    out.probs[{1, 0}] = k.p10;
    out.probs[{0, 1}] = k.p10;
    out.probs[{1, 1}] = k.p11;
    out.residual = k.bucket;
    out.x = x;
    out.tau = tau;
    out.method = "closed_form";
    out.error_estimate = closed_form_rel_error;
    return out;
}

namespace detail {

// Single-axis mode weight after analytic centroid marginalization:
//   J_k(s; gamma) = exp(-s^2/gamma)/sqrt(gamma) * M_2k(s/gamma, (gamma-1)/(2 gamma)) / k!
// where M_2k is the 2k-th moment of a Gaussian with mean delta and variance
// sigma^2, and gamma = 1 + 4 D t / w^2.  sum_k J_k = 1 exactly.
inline constexpr int j_order_cap = 80;

// coef[k][j] = C(2k, 2j) (2j-1)!! / k!
inline const std::array<std::array<double, j_order_cap + 1>, j_order_cap + 1>& j_coef_table() {
    static const auto table = [] {
        std::array<std::array<double, j_order_cap + 1>, j_order_cap + 1> t{};
        double inv_kfact = 1.0;
        for (int k = 0; k <= j_order_cap; ++k) {
            if (k > 0) inv_kfact /= k;
            double c = inv_kfact;  // j = 0
            t[k][0] = c;
            for (int j = 0; j < k; ++j) {
                c *= (2.0 * k - 2.0 * j) * (2.0 * k - 2.0 * j - 1.0) / (2.0 * j + 2.0);
                t[k][j + 1] = c;
            }
        }
        return t;
    }();
    return table;
}

// Fills jout[0..kmax] with J_0..J_kmax at (s, gamma).
inline void j_weights(double s, double gamma, int kmax, double* jout) {
    const auto& coef = j_coef_table();
    const double delta2 = (s / gamma) * (s / gamma);
    const double sig2 = (gamma - 1.0) / (2.0 * gamma);
    const double front = std::exp(-s * s / gamma) / std::sqrt(gamma);
    double d2pow[j_order_cap + 1], s2pow[j_order_cap + 1];
    d2pow[0] = 1.0;
    s2pow[0] = 1.0;
    for (int i = 1; i <= kmax; ++i) {
        d2pow[i] = d2pow[i - 1] * delta2;
        s2pow[i] = s2pow[i - 1] * sig2;
    }
    for (int k = 0; k <= kmax; ++k) {
        double m = 0.0;
        for (int j = 0; j <= k; ++j) m += coef[k][j] * s2pow[j] * d2pow[k - j];
        jout[k] = front * m;
    }
}

inline int phi_points(double x) {
    // Trapezoid count for exp(a cos 2phi)-type integrands, a <= x^2/2.
    const double a = 0.5 * x * x;
    const int n = 2 * (8 + static_cast<int>(std::ceil(a + 9.0 * std::cbrt(a + 1.0) + 8.0)));
    return n < 32 ? 32 : n;
}

// Orientation average of J_n(s_x) J_m(s_y) at fixed gamma, computed for both
// source sign conventions (out[0]: +s, out[1]: -s).
inline void orientation_average(double x, double gamma, int n, int m, int nphi,
                                double* out2) {
    if (x == 0.0) {
        double jn[j_order_cap + 1], jm[j_order_cap + 1];
        j_weights(0.0, gamma, n, jn);
        j_weights(0.0, gamma, m, jm);
        out2[0] = out2[1] = jn[n] * jm[m];
        return;
    }
    const int kmax = n > m ? n : m;
    // cos(theta) integral over [0,1] (even), adaptive GK on the phi-averaged values.
    std::vector<double> v = integrate_gk_vec(
        [&](double c, double* v2) {
            const double s = x * std::sqrt(1.0 - c * c);
            double sum1 = 0.0, sum2 = 0.0;
            double jn1[j_order_cap + 1], jm1[j_order_cap + 1];
            for (int i = 0; i < nphi; ++i) {
                const double phi = 2.0 * pi * i / nphi;
                const double sx = s * std::cos(phi), sy = s * std::sin(phi);
                j_weights(sx, gamma, kmax, jn1);
                j_weights(sy, gamma, kmax, jm1);
                sum1 += jn1[n] * jm1[m];
                j_weights(-sx, gamma, kmax, jn1);
                j_weights(-sy, gamma, kmax, jm1);
                sum2 += jn1[n] * jm1[m];
            }
            v2[0] = sum1 / nphi;
            v2[1] = sum2 / nphi;
        },
        2, 0.0, 1.0, 1e-11);
    out2[0] = v[0];
    out2[1] = v[1];
}

}  // namespace detail

// Deterministic nested quadrature for the averaged probability of one mode,
// any order up to 10 per axis.  ta_fraction = t_a / T restricts the time
// window to [t_a, T].  Absolute error <= 1e-8 by construction; the result is
// formed as nu p1 + (1-nu) p2 and checked to be nu-independent.
inline ProbValue averaged_prob_quadrature(ModeIndex idx, double x, double tau,
                                          double ta_fraction = 0.0) {
    detail::check_mode(idx, "averaged_prob_quadrature");
    if (!(x >= 0.0) || !(tau >= 0.0))
        throw std::invalid_argument("averaged_prob_quadrature: requires x >= 0 and tau >= 0");
    if (!(ta_fraction >= 0.0 && ta_fraction < 1.0))
        throw std::invalid_argument("averaged_prob_quadrature: ta_fraction must lie in [0,1)");
    const int nphi = detail::phi_points(x);
    double p_source[2];
    double quad_err = 0.0;
    if (tau == 0.0) {
        detail::orientation_average(x, 1.0, idx.n, idx.m, nphi, p_source);
        quad_err = 1e-11;
    } else {
        double err = 0.0;
        std::vector<double> v = integrate_gk_vec(
            [&](double u, double* out) {
                const double gamma = 1.0 + 4.0 * tau * u;
                detail::orientation_average(x, gamma, idx.n, idx.m, nphi, out);
            },
            2, ta_fraction, 1.0, 1e-9 * (1.0 - ta_fraction), &err);
        const double norm = 1.0 - ta_fraction;
        p_source[0] = v[0] / norm;
        p_source[1] = v[1] / norm;
        quad_err = err / norm + 1e-11;
    }
    // Photons stem from source 1 with probability nu; isotropy makes the two
    // source terms equal, which is asserted rather than assumed.
    const double p_lo = 0.1 * p_source[0] + 0.9 * p_source[1];
    const double p_hi = 0.9 * p_source[0] + 0.1 * p_source[1];
    if (std::abs(p_lo - p_hi) > 1e-9)
        throw std::runtime_error("averaged_prob_quadrature: nu-independence violated");
    return {0.5 * (p_source[0] + p_source[1]), quad_err};
}

// Quadrature bundle over all modes n,m <= M plus the residual computed from
// high-order completeness (axis sums to order 80, dropped tail < 1e-8 for
// tau <= 1, x <= 1).
inline AveragedProbabilities averaged_probs_quadrature(double x, double tau,
                                                       double ta_fraction = 0.0, int M = 1) {
    if (M < 0 || M > 10)
        throw std::invalid_argument("averaged_probs_quadrature: M must lie in [0, 10]");
    if (!(x >= 0.0) || !(tau >= 0.0))
        throw std::invalid_argument("averaged_probs_quadrature: requires x >= 0 and tau >= 0");
    if (!(ta_fraction >= 0.0 && ta_fraction < 1.0))
        throw std::invalid_argument("averaged_probs_quadrature: ta_fraction must lie in [0,1)");
    const int nphi = detail::phi_points(x);
    const int nmodes = (M + 1) * (M + 1);
    const int nout = nmodes + 1;  // + completeness sum to order cap
    const int kfull = detail::j_order_cap;

    auto angular = [&](double gamma, double* out) {
        for (int i = 0; i < nout; ++i) out[i] = 0.0;
        if (x == 0.0) {
            double j0[detail::j_order_cap + 1];
            detail::j_weights(0.0, gamma, kfull, j0);
            for (int n = 0; n <= M; ++n)
                for (int m = 0; m <= M; ++m) out[n * (M + 1) + m] = j0[n] * j0[m];
            double axis = 0.0;
            for (int k = 0; k <= kfull; ++k) axis += j0[k];
            out[nmodes] = axis * axis;
            return;
        }
        std::vector<double> v = integrate_gk_vec(
            [&](double c, double* o) {
                for (int i = 0; i < nout; ++i) o[i] = 0.0;
                const double s = x * std::sqrt(1.0 - c * c);
                double jx[detail::j_order_cap + 1], jy[detail::j_order_cap + 1];
                for (int i = 0; i < nphi; ++i) {
                    const double phi = 2.0 * pi * i / nphi;
                    detail::j_weights(s * std::cos(phi), gamma, kfull, jx);
                    detail::j_weights(s * std::sin(phi), gamma, kfull, jy);
                    for (int n = 0; n <= M; ++n)
                        for (int m = 0; m <= M; ++m) o[n * (M + 1) + m] += jx[n] * jy[m];
                    double ax = 0.0, ay = 0.0;
                    for (int k = 0; k <= kfull; ++k) {
                        ax += jx[k];
                        ay += jy[k];
                    }
                    o[nmodes] += ax * ay;
                }
                for (int i = 0; i < nout; ++i) o[i] /= nphi;
            },
            nout, 0.0, 1.0, 1e-11);
        for (int i = 0; i < nout; ++i) out[i] = v[i];
    };

    std::vector<double> vals(nout);
    double quad_err = 1e-10;
    if (tau == 0.0) {
        angular(1.0, vals.data());
    } else {
        double err = 0.0;
        std::vector<double> v = integrate_gk_vec(
            [&](double u, double* out) { angular(1.0 + 4.0 * tau * u, out); }, nout,
            ta_fraction, 1.0, 1e-9 * (1.0 - ta_fraction), &err);
        const double norm = 1.0 - ta_fraction;
        for (int i = 0; i < nout; ++i) vals[i] = v[i] / norm;
        quad_err = err / norm + 1e-10;
    }

    AveragedProbabilities out;
    double listed = 0.0;
    for (int n = 0; n <= M; ++n)
        for (int m = 0; m <= M; ++m) {
            out.probs[{n, m}] = vals[n * (M + 1) + m];
            listed += vals[n * (M + 1) + m];
        }
    out.residual = vals[nmodes] - listed;
    out.x = x;
    out.tau = tau;
    out.method = "quadrature";
    out.error_estimate = quad_err;
    return out;
}

// Alignment-time corrected probability: the average over [t_a, T] expressed
// through two full-window averages,
//   p(nm | T, t_a) = (T p(nm|T) - t_a p(nm|t_a)) / (T - t_a),  k = T/t_a.
inline double aligned_prob_with_ta(ModeIndex idx, double x, double tau, double k) {
    if (!(k > 1.0)) throw std::invalid_argument("aligned_prob_with_ta: requires k > 1");
    if (idx.n <= 1 && idx.m <= 1) {
        const double pT = averaged_prob_closed_form(idx, x, tau);
        const double pa = averaged_prob_closed_form(idx, x, tau / k);
        return (k * pT - pa) / (k - 1.0);
    }
    const double pT = averaged_prob_quadrature(idx, x, tau).value;
    const double pa = averaged_prob_quadrature(idx, x, tau / k).value;
    return (k * pT - pa) / (k - 1.0);
}

// d/dx companion of aligned_prob_with_ta for the closed-form modes.
inline double aligned_prob_with_ta_derivative(ModeIndex idx, double x, double tau, double k) {
    if (!(k > 1.0)) throw std::invalid_argument("aligned_prob_with_ta_derivative: requires k > 1");
    detail::require_closed_mode(idx, "aligned_prob_with_ta_derivative");
    const double dT = averaged_prob_closed_form_derivative(idx, x, tau);
    const double da = averaged_prob_closed_form_derivative(idx, x, tau / k);
    return (k * dT - da) / (k - 1.0);
}

// Mean and variance of the misalignment magnitude |mu| accumulated over one
// cycle, in units of w and w^2: E|mu| = (2/3) sqrt(pi tau),
// Var|mu| = (2 - 4 pi / 9) tau.
inline MisalignmentMoments misalignment_moments(double tau) {
    if (!(tau >= 0.0)) throw std::invalid_argument("misalignment_moments: requires tau >= 0");
    return {(2.0 / 3.0) * std::sqrt(pi * tau), (2.0 - 4.0 * pi / 9.0) * tau};
}

}  // namespace spade
