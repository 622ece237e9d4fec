#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "spade/optics.hpp"
#include "spade/quadrature.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using namespace spade;

TEST_CASE("hermite-gauss modes against reference values") {
    CHECK_THAT(hg_mode({0, 0}, {0.0, 0.0}, 1.3),
               WithinRel(0.6137573544637425814461, 1e-14));
    CHECK_THAT(hg_mode({1, 1}, {1.3, 1.3}, 1.3),
               WithinRel(0.3322521016196187812342, 1e-14));
    // (0.65, -0.39) sits on a node of H2(sqrt(2) px / w).
    CHECK_THAT(hg_mode({2, 1}, {0.65, -0.39}, 1.3), WithinAbs(0.0, 1e-15));
    CHECK_THROWS_AS(hg_mode({-1, 0}, {0.0, 0.0}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(hg_mode({0, 0}, {0.0, 0.0}, 0.0), std::invalid_argument);
}

TEST_CASE("hermite-gauss modes are orthonormal") {
    const double w = 0.8;
    auto inner = [&](ModeIndex a, ModeIndex b) {
        // Integrand decays like exp(-2 r^2 / w^2); 5.5 w covers it to 1e-26.
        auto fy = [&](double y) {
            return integrate_gl(
                [&](double x) {
                    return hg_mode(a, {x, y}, w) * hg_mode(b, {x, y}, w);
                },
                -5.5 * w, 5.5 * w, 96);
        };
        return integrate_gl(fy, -5.5 * w, 5.5 * w, 96);
    };
    CHECK_THAT(inner({0, 0}, {0, 0}), WithinRel(1.0, 1e-12));
    CHECK_THAT(inner({1, 0}, {1, 0}), WithinRel(1.0, 1e-12));
    CHECK_THAT(inner({2, 1}, {2, 1}), WithinRel(1.0, 1e-12));
    CHECK_THAT(inner({3, 3}, {3, 3}), WithinRel(1.0, 1e-12));
    CHECK_THAT(inner({0, 0}, {1, 0}), WithinAbs(0.0, 1e-13));
    CHECK_THAT(inner({2, 1}, {0, 1}), WithinAbs(0.0, 1e-13));
    CHECK_THAT(inner({3, 0}, {1, 0}), WithinAbs(0.0, 1e-13));
}

TEST_CASE("overlap amplitudes against reference values") {
    SystemConfig cfg;
    cfg.psf_width_w = 1.0;
    cfg.separation_d = 0.4;  // x = 0.2
    Pose pose;
    pose.mu = 0.3;
    pose.psi = 1.0;
    pose.theta = pi / 3.0;
    pose.phi = 2.0;
    CHECK_THAT(overlap_f({1, 1}, pose, cfg, 1),
               WithinRel(0.02153493959859876020158, 1e-13));
    CHECK_THAT(overlap_f({1, 1}, pose, cfg, 2),
               WithinRel(0.03378827292223907182443, 1e-13));

    // Pure displacement a = (0.45, -0.62) in waist units.
    SystemConfig solo;
    Pose off;
    off.mu = std::hypot(0.45, 0.62);
    off.psi = std::atan2(-0.62, 0.45);
    CHECK_THAT(overlap_f({2, 1}, off, solo, 1),
               WithinRel(-0.06620000214359964972706, 1e-13));
    CHECK_THROWS_AS(overlap_f({0, 0}, pose, cfg, 3), std::invalid_argument);
}

TEST_CASE("overlap amplitude equals the defining mode integral") {
    SystemConfig cfg;
    cfg.psf_width_w = 1.1;
    cfg.separation_d = 0.5;
    Pose pose;
    pose.mu = 0.27;
    pose.psi = -0.8;
    pose.theta = 1.1;
    pose.phi = 0.6;
    const double w = cfg.psf_width_w;
    const double x = cfg.separation_d / (2.0 * w);
    for (const ModeIndex idx : {ModeIndex{0, 0}, ModeIndex{1, 0}, ModeIndex{2, 1}}) {
        for (const int source : {1, 2}) {
            const double sgn = (source == 1) ? -1.0 : 1.0;
            const double rx =
                pose.mu * std::cos(pose.psi) + sgn * x * std::sin(pose.theta) * w * std::cos(pose.phi);
            const double ry =
                pose.mu * std::sin(pose.psi) + sgn * x * std::sin(pose.theta) * w * std::sin(pose.phi);
            auto fy = [&](double py) {
                return integrate_gl(
                    [&](double px) {
                        return hg_mode(idx, {px, py}, w) *
                               hg_mode({0, 0}, {px - rx, py - ry}, w);
                    },
                    -6.0 * w, 6.0 * w, 96);
            };
            const double numeric = integrate_gl(fy, -6.0 * w, 6.0 * w, 96);
            CHECK_THAT(overlap_f(idx, pose, cfg, source),
                       WithinRel(numeric, 1e-10) || WithinAbs(numeric, 1e-13));
        }
    }
}

TEST_CASE("swapping sources equals rotating the pair axis by pi") {
    SystemConfig cfg;
    cfg.separation_d = 0.7;
    Pose pose;
    pose.mu = 0.15;
    pose.psi = 0.4;
    pose.theta = 0.9;
    pose.phi = 2.3;
    Pose flipped = pose;
    flipped.phi = pose.phi + pi;
    for (const ModeIndex idx : {ModeIndex{0, 0}, ModeIndex{1, 0}, ModeIndex{1, 1}, ModeIndex{2, 2}}) {
        CHECK_THAT(overlap_f(idx, pose, cfg, 1),
                   WithinRel(overlap_f(idx, flipped, cfg, 2), 1e-12));
    }
}

TEST_CASE("mode weights are complete") {
    SystemConfig cfg;
    cfg.separation_d = 0.4;
    Pose pose;  // aligned, in-plane pair at 45 degrees
    pose.theta = pi / 2.0;
    pose.phi = pi / 4.0;
    double sum = 0.0;
    for (int n = 0; n <= 6; ++n)
        for (int m = 0; m <= 6; ++m) {
            const double f = overlap_f({n, m}, pose, cfg, 1);
            sum += f * f;
        }
    CHECK_THAT(sum, WithinAbs(1.0, 1e-12));
}

TEST_CASE("static mode probabilities against reference values") {
    CHECK_THAT(static_mode_prob({0, 0}, 0.1), WithinRel(0.99335992397852861, 1e-13));
    CHECK_THAT(static_mode_prob({1, 0}, 0.1), WithinRel(0.0033067806145247959, 1e-13));
    CHECK_THAT(static_mode_prob({1, 1}, 0.1), WithinRel(6.6097770099496999e-6, 1e-13));
    CHECK_THAT(static_mode_prob({0, 0}, 0.2), WithinRel(0.97375516684014025, 1e-13));
    CHECK_THAT(static_mode_prob({0, 1}, 0.2), WithinRel(0.012913895046837867, 1e-13));
    CHECK_THAT(static_mode_prob({1, 1}, 0.2), WithinRel(0.00010307375883187757, 1e-13));
    CHECK_THAT(static_mode_prob({0, 0}, 0.5), WithinRel(0.84887276700404459, 1e-13));
    CHECK_THAT(static_mode_prob({1, 0}, 0.5), WithinRel(0.068327287626516722, 1e-13));
    CHECK_THAT(static_mode_prob({1, 1}, 0.5), WithinRel(0.0033659143677246724, 1e-13));
    CHECK(static_mode_prob({0, 0}, 0.0) == 1.0);
    CHECK_THROWS_AS(static_mode_prob({2, 0}, 0.1), std::invalid_argument);
}

TEST_CASE("static derivatives match central differences") {
    for (const double x : {0.05, 0.3, 0.8, 1.5}) {
        const double h = 1e-5 * x;
        for (const ModeIndex idx : {ModeIndex{0, 0}, ModeIndex{1, 0}, ModeIndex{1, 1}}) {
            const double fd =
                (static_mode_prob(idx, x + h) - static_mode_prob(idx, x - h)) / (2.0 * h);
            CHECK_THAT(static_mode_prob_derivative(idx, x), WithinRel(fd, 1e-8));
        }
    }
}

TEST_CASE("static imaging intensity is normalized") {
    for (const double x : {0.0, 0.4, 1.2}) {
        const QuadResult q = integrate_gk(
            [&](double rho) { return 2.0 * pi * rho * di_intensity_static(rho, x); }, 0.0,
            9.0 + x, 1e-12, 1e-12);
        CHECK_THAT(q.value, WithinRel(1.0, 1e-9));
    }
    CHECK_THAT(di_intensity_static(0.0, 0.0), WithinRel(2.0 / pi, 1e-14));
    CHECK_THROWS_AS(di_intensity_static(-0.1, 0.2), std::invalid_argument);
}
