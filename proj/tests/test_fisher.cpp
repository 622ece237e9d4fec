#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "spade/brownian.hpp"
#include "spade/fisher.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using namespace spade;

TEST_CASE("mode-sorting information against reference values") {
    // Truncated detector: modes (0,0), (1,0), (0,1), (1,1) only.
    struct Frozen {
        double x, tau, fi;
    };
    constexpr Frozen pts[] = {
        {0.1, 1e-8, 0.65784519833741225},
        {0.005, 0.01, 0.00051765228434465282},
        {0.01, 0.01, 0.0020652536002232068},
        {0.02, 0.01, 0.0081763821909880337},
        {0.2, 0.001, 0.58398751671154858},
        {0.01, 1e-4, 0.16652550888009222},
        {0.05, 6.25e-6, 0.65947290161128107},
        {0.1, 0.01, 0.15345792110424501},
        {0.1, 1e-6, 0.65764521190012053},
        {0.1, 0.0, 0.65784721900953761},
    };
    for (const Frozen& f : pts) {
        CAPTURE(f.x, f.tau);
        const FisherResult r = fi_spade(f.x, f.tau);
        CHECK_THAT(r.fi_per_photon, WithinRel(f.fi, 1e-11));
        CHECK(r.method == "closed_form_derivative");
        CHECK(r.modes_M == 1);
        CHECK(r.error_estimate < 1e-9);
    }
}

TEST_CASE("bucket channel adds information") {
    struct Frozen {
        double x, tau, fi;
    };
    constexpr Frozen pts[] = {
        {0.1, 1e-8, 0.6657693563671677},
        {0.2, 0.001, 0.61463563798505244},
        {0.1, 0.01, 0.16196351608315194},
        {0.1, 1e-6, 0.66556931065008796},
        {0.1, 0.0, 0.66577137764205929},
    };
    for (const Frozen& f : pts) {
        CAPTURE(f.x, f.tau);
        const FisherResult r = fi_spade(f.x, f.tau, 1, std::nullopt, true);
        CHECK_THAT(r.fi_per_photon, WithinRel(f.fi, 1e-11));
        CHECK(r.fi_per_photon > fi_spade(f.x, f.tau).fi_per_photon);
    }
}

TEST_CASE("alignment-window information against reference value") {
    const FisherResult r = fi_spade(0.1, 1e-6, 1, 5.0);
    CHECK_THAT(r.fi_per_photon, WithinRel(0.657604824933, 1e-9));
}

TEST_CASE("direct imaging information against reference values") {
    struct Frozen {
        double x, tau, fi;
    };
    constexpr Frozen pts[] = {
        {0.02, 0.001, 0.00070470013218415},
        {0.02, 0.01, 0.000656145808354},
        {0.05, 0.001, 0.00437999245311},
        {0.05, 0.01, 0.0040790427137331},
        {0.05, 0.0, 0.0044150320688481},
        {0.1, 0.001, 0.017181127328637},
        {0.2, 0.01, 0.059631598929719},
        {0.1, 1.0, 0.00072691389462325},
        {0.02, 0.005, 0.000682609551865},
    };
    for (const Frozen& f : pts) {
        CAPTURE(f.x, f.tau);
        const FisherResult r = fi_direct_imaging(f.x, f.tau);
        CHECK_THAT(r.fi_per_photon, WithinRel(f.fi, 1e-9));
        CHECK(r.method == "quadrature");
        CHECK(r.modes_M == 0);
    }
}

TEST_CASE("information grows with the mode cutoff and respects the quantum bound") {
    for (const auto& [x, tau] : {std::pair{0.1, 0.01}, std::pair{0.3, 0.05}}) {
        CAPTURE(x, tau);
        double prev = 0.0;
        for (int M = 1; M <= 3; ++M) {
            const FisherResult r = fi_spade(x, tau, M);
            CHECK(r.fi_per_photon >= prev - r.error_estimate);
            CHECK(r.fi_per_photon - r.error_estimate <= 1.0);
            prev = r.fi_per_photon;
        }
    }
}

TEST_CASE("analytic probability slopes match refined differences") {
    // Randomized audit of the derivative algebra feeding every closed-form
    // information value.
    std::mt19937 gen(12345);
    std::uniform_real_distribution<double> ux(std::log(2e-3), std::log(3.0));
    std::uniform_real_distribution<double> ut(std::log(1e-8), std::log(1.0));
    for (int trial = 0; trial < 100; ++trial) {
        const double x = std::exp(ux(gen));
        const double tau = std::exp(ut(gen));
        const double h = 1e-3 * x;
        CAPTURE(trial, x, tau);
        for (const ModeIndex idx : {ModeIndex{0, 0}, ModeIndex{1, 0}, ModeIndex{1, 1}}) {
            auto p = [&](double xx) { return averaged_prob_closed_form(idx, xx, tau); };
            const double c1 = (p(x + h) - p(x - h)) / (2.0 * h);
            const double c2 = (p(x + 0.5 * h) - p(x - 0.5 * h)) / h;
            const double richardson = (4.0 * c2 - c1) / 3.0;
            const double exact = averaged_prob_closed_form_derivative(idx, x, tau);
            CHECK_THAT(exact, WithinRel(richardson, 1e-6) || WithinAbs(richardson, 1e-12));
        }
    }
}

TEST_CASE("diffusion degrades the information monotonically") {
    for (const double x : {0.05, 0.1, 0.2}) {
        CAPTURE(x);
        double prev = fi_spade(x, 1e-6).fi_per_photon;
        for (const double tau : {1e-3, 1e-2}) {
            const double cur = fi_spade(x, tau).fi_per_photon;
            CHECK(cur < prev);
            prev = cur;
        }
    }
}

TEST_CASE("asymptotic forms match the exact evaluation where they claim to") {
    // Short window: F = 2/3 - 2 (k+1) tau / (k x^2) near x >> sqrt(tau).
    CHECK_THAT(fi_asymptotic_spade(0.1, 1e-6, Regime::short_time),
               WithinRel(2.0 / 3.0 - 2.0 * 1e-6 / 0.01, 1e-12));
    const double shortk = fi_asymptotic_spade(0.1, 1e-6, Regime::short_time, 5.0);
    CHECK_THAT(shortk, WithinRel(2.0 / 3.0 - 2.0 * (6.0 / 5.0) * 1e-6 / 0.01, 1e-12));
    // The expansion drops O(x^2) static corrections (-0.13% at x = 0.1) and
    // describes the bucket-included information.
    CHECK_THAT(fi_spade(0.1, 1e-6, 1, std::nullopt, true).fi_per_photon,
               WithinRel(fi_asymptotic_spade(0.1, 1e-6, Regime::short_time), 3e-3));
    // Long window: F = (2/(9 tau) - 43/27) x^2 + O(x^4).
    const double c = 2.0 / (9.0 * 0.01) - 43.0 / 27.0;
    CHECK_THAT(fi_asymptotic_spade(0.005, 0.01, Regime::long_time),
               WithinRel(c * 0.005 * 0.005, 1e-12));
    CHECK_THAT(fi_spade(0.005, 0.01).fi_per_photon,
               WithinRel(fi_asymptotic_spade(0.005, 0.01, Regime::long_time), 0.02));
    // Direct imaging: F = x^2 (16/9 - 128 tau / 9 + 1792 tau^2 / 27).
    CHECK_THAT(fi_asymptotic_direct(0.02, 0.001),
               WithinRel(4e-4 * (16.0 / 9.0 - 128.0 * 0.001 / 9.0 + 1792.0 * 1e-6 / 27.0),
                         1e-12));
    CHECK_THAT(fi_direct_imaging(0.02, 0.001).fi_per_photon,
               WithinRel(fi_asymptotic_direct(0.02, 0.001), 0.05));
}

TEST_CASE("diffusion tied to the separation scale") {
    CHECK_THAT(fi_with_scaling(0.01, {1.0, 1.0}).fi_per_photon,
               WithinRel(0.16652550888, 1e-9));
    CHECK_THAT(fi_with_scaling(0.01, {1.0, 1.0 / (3.0 * std::sqrt(3.0))}).fi_per_photon,
               WithinRel(0.599904081123, 1e-9));
    CHECK_THAT(fi_with_scaling(0.05, {2.0, 1.0}).fi_per_photon,
               WithinRel(0.659472901611, 1e-9));
    // q = 1 pins tau / x^2, so the x -> 0 information limit stays finite:
    // F -> 2 / (3 (1 + 3 kappa^2)) at kappa < 1/sqrt(3).
    const double kappa = 0.3;
    const double limit = 2.0 / (3.0 * (1.0 + 3.0 * kappa * kappa));
    CHECK_THAT(fi_with_scaling(1e-3, {1.0, kappa}).fi_per_photon, WithinRel(limit, 2e-3));
}

TEST_CASE("minimal resolvable separation against reference values") {
    struct Frozen {
        long long n;
        double dmin;
    };
    // Effectively static sources.
    constexpr Frozen cold[] = {
        {1000, 0.0387395217},
        {10000, 0.01224775541},
        {100000, 0.003872994578},
        {1000000, 0.001224750077},
        {10000000, 0.0003873138347},
    };
    for (const Frozen& f : cold) {
        CAPTURE(f.n);
        CHECK_THAT(min_resolvable_distance(f.n, 1e-12), WithinRel(f.dmin, 1e-6));
    }
    // Fixed diffusion budget tau = 0.01: the fourth-root law takes over.
    constexpr Frozen warm[] = {
        {1000, 0.1214781882},
        {10000, 0.06691574361},
        {100000, 0.03738539124},
        {1000000, 0.02098018186},
        {10000000, 0.01179036012},
    };
    for (const Frozen& f : warm) {
        CAPTURE(f.n);
        CHECK_THAT(min_resolvable_distance(f.n, 0.01), WithinRel(f.dmin, 1e-6));
    }
    CHECK_THAT(min_resolvable_distance(10000, 1e-9), WithinRel(0.0122482448232, 1e-6));
    CHECK_THAT(min_resolvable_distance(10000, ScalingSpec{1.0, 0.2}),
               WithinRel(0.012961922373, 1e-6));
}

TEST_CASE("resolvable separation needs a minimum photon budget") {
    // The optimum of 2x sqrt(fi(x)) stays below 1/sqrt(3) for one mode plus
    // bucket, so up to three photons the fixed point has no solution and the
    // solver must say so rather than return a number.
    for (const long long n : {1LL, 2LL, 3LL}) {
        CAPTURE(n);
        CHECK_THROWS_AS(min_resolvable_distance(n, 0.01), std::runtime_error);
    }
    const double d = min_resolvable_distance(5, 0.01);
    CHECK(d > 0.5);
    CHECK(d < 0.8);
    const double x = d / 2.0;
    const double fi = fi_spade(x, 0.01).fi_per_photon;
    CHECK_THAT(2.0 * x * std::sqrt(5.0 * fi), WithinAbs(1.0, 1e-5));
}

TEST_CASE("crossover of the two measurement families") {
    const double s = spade_di_crossover();
    CHECK(s > 0.285);
    CHECK(s < 0.295);
    CHECK_THAT(s, WithinRel(0.28991798855651932, 1e-12));
    const double t = s * s;
    CHECK(std::abs(((1792.0 * t - 384.0) * t + 91.0) * t - 6.0) <= 1e-12);
    // The long-time x^2 coefficients change order exactly at the root.
    const double x = 0.004;
    auto coeff_gap = [x](double tau) {
        return fi_asymptotic_spade(x, tau, Regime::long_time) - fi_asymptotic_direct(x, tau);
    };
    CHECK(coeff_gap(0.9 * t) > 0.0);
    CHECK(coeff_gap(1.1 * t) < 0.0);
    // The unexpanded information flips as well, though not at the root: the
    // coefficients above are leading orders in tau and tau* ~ 0.084 is not
    // deep in that regime, so the exact crossing lands near 2.1 tau*.
    auto gap = [x](double tau) {
        return fi_spade(x, tau).fi_per_photon - fi_direct_imaging(x, tau).fi_per_photon;
    };
    CHECK(gap(0.9 * t) > 0.0);
    CHECK(gap(2.5 * t) < 0.0);
}

TEST_CASE("information domain errors") {
    CHECK_THROWS_AS(fi_spade(0.0, 0.01), std::invalid_argument);
    CHECK_THROWS_AS(fi_spade(0.1, -0.01), std::invalid_argument);
    CHECK_THROWS_AS(fi_spade(0.1, 0.01, 4), std::invalid_argument);
    CHECK_THROWS_AS(fi_spade(0.1, 0.01, 1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(fi_direct_imaging(0.0, 0.01), std::invalid_argument);
    CHECK_THROWS_AS(fi_with_scaling(0.1, {0.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(fi_with_scaling(0.1, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(min_resolvable_distance(0, 0.01), std::invalid_argument);
    CHECK_THROWS_AS(min_resolvable_distance(-5, 0.01), std::invalid_argument);
}
