#pragma once

// Quadrature rules used across the library:
//  - adaptive Gauss-Kronrod 7/15 for smooth one-dimensional integrals,
//  - cached Gauss-Legendre rules of arbitrary order,
//  - uniform periodic averages (exact for trigonometric polynomials).

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace spade {

struct QuadResult {
    double value = 0.0;
    double abs_error = 0.0;   // conservative bound from Kronrod/Gauss differences
    int segments = 0;
};

// Raised when an adaptive or iterative scheme cannot meet its accuracy target.
// partial_value carries the best estimate obtained so far.
class precision_error : public std::runtime_error {
public:
    precision_error(const std::string& msg, double partial)
        : std::runtime_error(msg), partial_value(partial) {}
    double partial_value;
};

namespace detail {

// Kronrod-15 abscissas (center outward) with embedded Gauss-7 at odd indices.
inline constexpr std::array<double, 8> gk15_x = {
    0.0,
    0.207784955007898467600689403773244913,
    0.405845151377397166906606412076961463,
    0.586087235467691130294144838258729598,
    0.741531185599394439863864773280788407,
    0.864864423359769072789712788640926201,
    0.949107912342758524526189684047851262,
    0.991455371120812639206854697526328517,
};
inline constexpr std::array<double, 8> gk15_wk = {
    0.209482141084727828012999174891714264,
    0.204432940075298892414161999234649085,
    0.190350578064785409913256402421013683,
    0.169004726639267902826583426598550284,
    0.140653259715525918745189590510237920,
    0.104790010322250183839876322541518017,
    0.063092092629978553290700663189204287,
    0.022935322010529224963732008058969592,
};
// Gauss-7 weights for abscissa indices 0 (center), 2, 4, 6.
inline constexpr std::array<double, 4> gk15_wg = {
    0.417959183673469387755102040816326531,
    0.381830050505118944950369775488975134,
    0.279705391489276667901467771423779582,
    0.129484966168869693270611432679082018,
};

template <class F>
inline void gk15_panel(F&& f, double a, double b, double& k15, double& g7) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double sk = gk15_wk[0] * fc;
    double sg = gk15_wg[0] * fc;
    for (int i = 1; i < 8; ++i) {
        const double d = h * gk15_x[i];
        const double s = f(c - d) + f(c + d);
        sk += gk15_wk[i] * s;
        if (i % 2 == 0) sg += gk15_wg[i / 2] * s;
    }
    k15 = sk * h;
    g7 = sg * h;
}

struct Segment {
    double a, b;
    int depth;
};

}  // namespace detail

// Adaptive GK7/15 on [a,b]. Bisects until each segment's Kronrod/Gauss
// difference fits within its length-proportional share of the tolerance.
template <class F>
inline QuadResult integrate_gk(F&& f, double a, double b,
                               double abs_tol = 1e-10, double rel_tol = 1e-10,
                               int max_depth = 45, int max_segments = 20000) {
    if (!(b > a)) return {0.0, 0.0, 0};
    double k0, g0;
    detail::gk15_panel(f, a, b, k0, g0);
    const double scale = std::max(std::abs(k0), 1e-300);
    const double tol = std::max(abs_tol, rel_tol * scale);

    std::vector<detail::Segment> stack{{a, b, 0}};
    double total = 0.0, err = 0.0;
    int used = 0;
    while (!stack.empty()) {
        const detail::Segment s = stack.back();
        stack.pop_back();
        double k15, g7;
        detail::gk15_panel(f, s.a, s.b, k15, g7);
        const double e = std::abs(k15 - g7);
        const double share = tol * (s.b - s.a) / (b - a);
        if (e <= share || s.depth >= max_depth) {
            total += k15;
            err += e;
            ++used;
            if (used > max_segments)
                throw precision_error("integrate_gk: segment budget exhausted", total);
        } else {
            const double m = 0.5 * (s.a + s.b);
            stack.push_back({s.a, m, s.depth + 1});
            stack.push_back({m, s.b, s.depth + 1});
        }
    }
    return {total, err, used};
}

// Vector-valued adaptive GK7/15: f(t, out) fills n_out components sharing the
// same abscissas, adapted on the max-norm of the component error estimates.
template <class F>
inline std::vector<double> integrate_gk_vec(F&& f, int n_out, double a, double b,
                                            double abs_tol, double* err_out = nullptr,
                                            int max_depth = 45, int max_segments = 20000) {
    std::vector<double> total(n_out, 0.0);
    if (!(b > a)) {
        if (err_out) *err_out = 0.0;
        return total;
    }
    std::vector<double> buf(n_out), sk(n_out), sg(n_out);
    auto panel = [&](double lo, double hi, std::vector<double>& k15, std::vector<double>& g7) {
        const double c = 0.5 * (lo + hi);
        const double h = 0.5 * (hi - lo);
        f(c, buf.data());
        for (int j = 0; j < n_out; ++j) {
            k15[j] = detail::gk15_wk[0] * buf[j];
            g7[j] = detail::gk15_wg[0] * buf[j];
        }
        for (int i = 1; i < 8; ++i) {
            const double d = h * detail::gk15_x[i];
            for (int side = 0; side < 2; ++side) {
                f(side == 0 ? c - d : c + d, buf.data());
                for (int j = 0; j < n_out; ++j) {
                    k15[j] += detail::gk15_wk[i] * buf[j];
                    if (i % 2 == 0) g7[j] += detail::gk15_wg[i / 2] * buf[j];
                }
            }
        }
        for (int j = 0; j < n_out; ++j) {
            k15[j] *= h;
            g7[j] *= h;
        }
    };

    std::vector<detail::Segment> stack{{a, b, 0}};
    double err = 0.0;
    int used = 0;
    while (!stack.empty()) {
        const detail::Segment s = stack.back();
        stack.pop_back();
        panel(s.a, s.b, sk, sg);
        double e = 0.0;
        for (int j = 0; j < n_out; ++j) e = std::max(e, std::abs(sk[j] - sg[j]));
        const double share = abs_tol * (s.b - s.a) / (b - a);
        if (e <= share || s.depth >= max_depth) {
            for (int j = 0; j < n_out; ++j) total[j] += sk[j];
            err += e;
            ++used;
            if (used > max_segments)
                throw precision_error("integrate_gk_vec: segment budget exhausted", total[0]);
        } else {
            const double m = 0.5 * (s.a + s.b);
            stack.push_back({s.a, m, s.depth + 1});
            stack.push_back({m, s.b, s.depth + 1});
        }
    }
    if (err_out) *err_out = err;
    return total;
}

struct GlRule {
    std::vector<double> x;  // nodes on (-1, 1), ascending
    std::vector<double> w;
};

// Gauss-Legendre rule of order n, computed once by Newton iteration on P_n
// from Chebyshev initial guesses and cached for reuse across threads.
inline const GlRule& gauss_legendre(int n) {
    static std::mutex mtx;
    static std::map<int, GlRule> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    if (n < 1) throw std::invalid_argument("gauss_legendre: order must be positive");

    GlRule rule;
    rule.x.assign(n, 0.0);
    rule.w.assign(n, 0.0);
    constexpr double pi = 3.14159265358979323846264338327950288;
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.x[i] = -x;
        rule.w[i] = w;
        rule.x[n - 1 - i] = x;
        rule.w[n - 1 - i] = w;
    }
    return cache.emplace(n, std::move(rule)).first->second;
}

template <class F>
inline double integrate_gl(F&& f, double a, double b, int n) {
    const GlRule& r = gauss_legendre(n);
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += r.w[i] * f(c + h * r.x[i]);
    return s * h;
}

// Mean of f over one period [0, 2*pi); exact for trigonometric polynomials
// of degree below n.
template <class F>
inline double periodic_mean(F&& f, int n) {
    constexpr double two_pi = 6.28318530717958647692528676655900577;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += f(two_pi * i / n);
    return s / n;
}

}  // namespace spade
