#pragma once

// Scalar special functions with certified absolute error bounds: the Dawson
// integral, the hypergeometric 2F2(1,1;2,5/2;z) and its derivative, scaled
// modified Bessel functions, and the Kolmogorov tail distribution.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include "spade/quadrature.hpp"

namespace spade {

inline constexpr double pi = 3.14159265358979323846264338327950288;

struct EvalResult {
    double value = 0.0;
    double abs_error_bound = 0.0;
};

namespace detail {

// Maclaurin series F(x) = sum_k (-2)^k x^(2k+1) / (2k+1)!!, used for |x| <= 1.
inline double dawson_maclaurin(double x) {
    const double x2 = x * x;
    double term = x, sum = x;
    for (int k = 1; k <= 40; ++k) {
        term *= -2.0 * x2 / (2.0 * k + 1.0);
        sum += term;
        if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
    }
    return sum;
}

// Rybicki's sampling series at h = 1/4 over odd n only; accurate to a few
// 1e-18 relative on 1 < x < 7.  Window half-width 53 keeps the dropped tail
// below exp(-169).
inline double dawson_rybicki(double x) {
    constexpr double h = 0.25;
    const int n0 = static_cast<int>(std::lround(x / h));
    int n = n0 - 53;
    if (n % 2 == 0) n += 1;
    double sum = 0.0;
    for (; n <= n0 + 53; n += 2) {
        const double d = x - n * h;
        sum += std::exp(-d * d) / n;
    }
    return sum / std::sqrt(pi);
}

// Asymptotic series F(x) ~ (1/(2x)) sum_k (2k-1)!!/(2x^2)^k for |x| >= 7.
inline double dawson_asymptotic(double x) {
    const double r = 1.0 / (2.0 * x * x);
    double term = 1.0, sum = 1.0;
    for (int k = 1; k <= 20; ++k) {
        term *= (2.0 * k - 1.0) * r;
        sum += term;
        if (term <= 1e-18 * sum) break;
    }
    return sum / (2.0 * x);
}

inline double dawson_value(double ax) {
    if (ax <= 1.0) return dawson_maclaurin(ax);
    if (ax < 7.0) return dawson_rybicki(ax);
    return dawson_asymptotic(ax);
}

}  // namespace detail

// Dawson integral F(x) = exp(-x^2) int_0^x exp(t^2) dt.  Odd by construction:
// dawson(-x).value == -dawson(x).value bit for bit.
inline EvalResult dawson(double x) {
    const double v = detail::dawson_value(std::abs(x));
    return {std::copysign(v, x), 1e-15};
}

namespace detail {

// (F(t) - t)/t^2, the integrand of the Dawson deficit integral.  Series for
// t <= 1 avoids the small-t cancellation of the direct difference.
inline double dawson_deficit_over_t2(double t) {
    if (t <= 1.0) {
        const double t2 = t * t;
        double term = -2.0 * t / 3.0;  // k = 1 term of sum_k (-2)^k t^(2k-1)/(2k+1)!!
        double sum = term;
        for (int k = 2; k <= 40; ++k) {
            term *= -2.0 * t2 / (2.0 * k + 1.0);
            sum += term;
            if (std::abs(term) <= 1e-18 * std::abs(sum) + 1e-300) break;
        }
        return sum;
    }
    return (dawson_value(t) - t) / (t * t);
}

// Psi(u) = int_0^u (F(t) - t)/t^2 dt via composite Gauss-Legendre panels of
// width <= 2; the integrand is entire so each panel converges spectrally.
inline double dawson_deficit_integral(double lo, double hi) {
    const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / 2.0)));
    double s = 0.0;
    for (int i = 0; i < panels; ++i) {
        const double a = lo + (hi - lo) * i / panels;
        const double b = lo + (hi - lo) * (i + 1) / panels;
        s += integrate_gl([](double t) { return dawson_deficit_over_t2(t); }, a, b, 32);
    }
    return s;
}

// Same integral over [x + h, x] with h <= 0 passed explicitly.  When the
// window is a relative sliver of x, forming the lower endpoint first would
// round it to an ulp of x and poison the width; keeping h exact preserves
// full relative accuracy of the integral.
inline double dawson_deficit_integral_offset(double x, double h) {
    const double width = -h;
    const int panels = std::max(1, static_cast<int>(std::ceil(width / 2.0)));
    double s = 0.0;
    for (int i = 0; i < panels; ++i) {
        const double a = static_cast<double>(i) / panels;
        const double b = (i + 1.0) / panels;
        s += integrate_gl([&](double u) { return dawson_deficit_over_t2(x + h * u); }, a, b,
                          32);
    }
    return s * width;
}

}  // namespace detail

// Phi(z) = 2F2(1,1; 2,5/2; z) = sum_k z^k / ((k+1) (5/2)_k).
// Direct Kahan-compensated series for z >= -12 (iteration cap 500), where
// alternating cancellation costs under two digits; below that the exact
// representation Phi(-u^2) = -(3/u^2) int_0^u (F(t)-t)/t^2 dt takes over.
inline EvalResult hyp2f2_1_1_2_5h(double z) {
    if (z >= -12.0) {
        double sum = 1.0, comp = 0.0, term = 1.0, amax = 1.0;
        for (int k = 0; k < 500; ++k) {
            term *= z * (k + 1.0) / ((k + 2.0) * (k + 2.5));
            const double y = term - comp;
            const double t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            const double at = std::abs(term);
            amax = std::max(amax, at);
            if (at <= 1e-17 * std::abs(sum) + 1e-300)
                return {sum, 4e-16 * amax + 1e-16 * std::abs(sum)};
        }
        throw precision_error("hyp2f2_1_1_2_5h: series stalled", sum);
    }
    const double u = std::sqrt(-z);
    const double psi = detail::dawson_deficit_integral(0.0, u);
    return {-3.0 * psi / (u * u), 1e-13};
}

// d/dz of the above.  Series branch differentiates term by term; the far
// branch uses Phi'(-u^2) = (3/2)(F(u)-u)/u^5 - 3 Psi(u)/u^4.
inline EvalResult hyp2f2_1_1_2_5h_prime(double z) {
    if (z >= -12.0) {
        double sum = 0.2, comp = 0.0, term = 0.2, amax = 0.2;  // k=1 coefficient: 1/((2)(5/2))
        for (int k = 1; k < 500; ++k) {
            term *= z * (k + 1.0) * (k + 1.0) / (k * (k + 2.0) * (k + 2.5));
            const double y = term - comp;
            const double t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            const double at = std::abs(term);
            amax = std::max(amax, at);
            if (at <= 1e-17 * std::abs(sum) + 1e-300)
                return {sum, 4e-16 * amax + 1e-16 * std::abs(sum)};
        }
        throw precision_error("hyp2f2_1_1_2_5h_prime: series stalled", sum);
    }
    const double u = std::sqrt(-z);
    const double u2 = u * u;
    const double psi = detail::dawson_deficit_integral(0.0, u);
    const double f = detail::dawson_value(u);
    return {1.5 * (f - u) / (u2 * u2 * u) - 3.0 * psi / (u2 * u2), 1e-13};
}

// Scaled modified Bessel functions exp(-a) I0(a) and exp(-a) I1(a), a >= 0.
// Power series up to a = 20, uniform asymptotic series beyond.
namespace detail {

inline double bessel_ive_asymptotic(double mu, double a) {
    double term = 1.0, sum = 1.0;
    for (int k = 1; k <= 24; ++k) {
        const double m = 2.0 * k - 1.0;
        term *= (m * m - mu) / (8.0 * a * k);
        sum += term;
        if (std::abs(term) <= 1e-17 * std::abs(sum)) break;
    }
    return sum / std::sqrt(2.0 * pi * a);
}

}  // namespace detail

inline double bessel_i0e(double a) {
    if (a < 0.0) throw std::invalid_argument("bessel_i0e: negative argument");
    if (a <= 20.0) {
        const double q = 0.25 * a * a;
        double term = 1.0, sum = 1.0;
        for (int k = 1; k <= 60; ++k) {
            term *= q / (static_cast<double>(k) * k);
            sum += term;
            if (term <= 1e-17 * sum) break;
        }
        return std::exp(-a) * sum;
    }
    return detail::bessel_ive_asymptotic(0.0, a);
}

inline double bessel_i1e(double a) {
    if (a < 0.0) throw std::invalid_argument("bessel_i1e: negative argument");
    if (a <= 20.0) {
        const double q = 0.25 * a * a;
        double term = 0.5 * a, sum = term;
        for (int k = 1; k <= 60; ++k) {
            term *= q / (static_cast<double>(k) * (k + 1.0));
            sum += term;
            if (term <= 1e-17 * sum) break;
        }
        return std::exp(-a) * sum;
    }
    return detail::bessel_ive_asymptotic(4.0, a);
}

// Kolmogorov tail Q(lambda) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lambda^2).
inline double kolmogorov_q(double lambda) {
    if (lambda <= 0.05) return 1.0;
    double s = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 200; ++j) {
        const double t = std::exp(-2.0 * j * j * lambda * lambda);
        s += sign * t;
        sign = -sign;
        if (t < 1e-18) break;
    }
    return std::clamp(2.0 * s, 0.0, 1.0);
}

}  // namespace spade
