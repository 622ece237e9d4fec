#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>

#include "spade/quadrature.hpp"
#include "spade/special_functions.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using namespace spade;

TEST_CASE("dawson function against reference values") {
    CHECK_THAT(dawson(1.0).value, WithinRel(0.5380795069127684191363874, 1e-15));
    CHECK_THAT(dawson(0.1).value, WithinRel(0.0993359923978528611497887, 1e-15));
    CHECK_THAT(dawson(3.0).value, WithinRel(0.1782710306105582873425995, 1e-15));
    CHECK_THAT(dawson(7.5).value, WithinRel(0.06727581164463061598693272, 1e-15));
    CHECK(dawson(0.0).value == 0.0);
}

TEST_CASE("dawson is odd and its error bound is honest") {
    for (const double x : {0.3, 0.9999, 1.0001, 2.0, 6.9999, 7.0001, 12.0}) {
        const EvalResult plus = dawson(x);
        const EvalResult minus = dawson(-x);
        CHECK(minus.value == -plus.value);
        CHECK(plus.abs_error_bound >= 0.0);
        CHECK(plus.abs_error_bound < 1e-14);
    }
}

TEST_CASE("dawson deficit integral matches the hypergeometric identity") {
    // int_v^x (F(t)-t)/t^2 dt = x^2 [Phi(-v^2) v/x ... ] reduces, with
    // v = x/sqrt(G), to [Phi(-x^2/G)/G - Phi(-x^2)] x^2 / 3.
    for (const double x : {0.4, 0.9, 2.0}) {
        for (const double gam : {1.2, 2.0, 5.0}) {
            const double v = x / std::sqrt(gam);
            const double lhs = detail::dawson_deficit_integral(v, x);
            const double rhs = (hyp2f2_1_1_2_5h(-x * x / gam).value / gam - hyp2f2_1_1_2_5h(-x * x).value) *
                               x * x / 3.0;
            CHECK_THAT(lhs, WithinRel(rhs, 1e-12));
        }
    }
}

TEST_CASE("hypergeometric 2F2(1,1;2,5/2) against reference values") {
    CHECK_THAT(hyp2f2_1_1_2_5h(0.0).value, WithinAbs(1.0, 1e-15));
    CHECK_THAT(hyp2f2_1_1_2_5h(-0.25).value, WithinRel(0.9522852411307411223466419, 1e-14));
    CHECK_THAT(hyp2f2_1_1_2_5h(-4.0).value, WithinRel(0.5572834531141718867347626, 1e-13));
    CHECK_THAT(hyp2f2_1_1_2_5h(-16.0).value, WithinRel(0.25948799706945412482444, 5e-13));
    CHECK_THAT(hyp2f2_1_1_2_5h(-25.0).value, WithinRel(0.1921556718404670607691958, 1e-13));
}

TEST_CASE("hypergeometric derivative against reference values and differences") {
    CHECK_THAT(hyp2f2_1_1_2_5h_prime(-0.25).value,
               WithinRel(0.1820873726200346942206004, 1e-13));
    CHECK_THAT(hyp2f2_1_1_2_5h_prime(-4.0).value,
               WithinRel(0.05969619400934572009156555, 1e-12));
    CHECK_THAT(hyp2f2_1_1_2_5h_prime(-25.0).value,
               WithinRel(0.005335251229342335311778338, 1e-12));
    // Central difference probe across the series/identity seam.
    for (const double z : {-0.7, -9.0, -11.9999, -12.0001, -30.0}) {
        const double h = 1e-5 * std::abs(z);
        const double fd = (hyp2f2_1_1_2_5h(z + h).value - hyp2f2_1_1_2_5h(z - h).value) / (2.0 * h);
        CHECK_THAT(hyp2f2_1_1_2_5h_prime(z).value, WithinRel(fd, 1e-8));
    }
}

TEST_CASE("scaled bessel functions against reference values") {
    CHECK_THAT(bessel_i0e(0.5), WithinRel(0.645035270449150068108, 1e-14));
    CHECK_THAT(bessel_i1e(0.5), WithinRel(0.1564208031848716971426, 1e-14));
    CHECK_THAT(bessel_i0e(5.0), WithinRel(0.1835408126093283530737, 1e-14));
    CHECK_THAT(bessel_i1e(5.0), WithinRel(0.1639722669445423569261, 1e-14));
    CHECK_THAT(bessel_i0e(19.5), WithinRel(0.09093943209515648330516, 1e-13));
    CHECK_THAT(bessel_i1e(19.5), WithinRel(0.08857608609431485245713, 1e-13));
    CHECK_THAT(bessel_i0e(20.5), WithinRel(0.08866442901574524814675, 1e-13));
    CHECK_THAT(bessel_i1e(20.5), WithinRel(0.08647411349408724557088, 1e-13));
    CHECK_THAT(bessel_i0e(100.0), WithinRel(0.03994437929909668264756, 1e-13));
    CHECK_THAT(bessel_i1e(100.0), WithinRel(0.03974415302513025267364, 1e-13));
    CHECK(bessel_i0e(0.0) == 1.0);
    CHECK(bessel_i1e(0.0) == 0.0);
    CHECK_THROWS_AS(bessel_i0e(-3.0), std::invalid_argument);
    CHECK_THROWS_AS(bessel_i1e(-3.0), std::invalid_argument);
    // i1e < i0e for positive argument, both decay monotonically.
    double prev = 1.0;
    for (double z = 0.5; z < 40.0; z *= 1.7) {
        CHECK(bessel_i1e(z) < bessel_i0e(z));
        CHECK(bessel_i0e(z) < prev);
        prev = bessel_i0e(z);
    }
}

TEST_CASE("kolmogorov tail probability") {
    CHECK_THAT(kolmogorov_q(0.5), WithinRel(0.963945243665, 1e-11));
    CHECK_THAT(kolmogorov_q(1.0), WithinRel(0.269999671677, 1e-11));
    CHECK_THAT(kolmogorov_q(1.224), WithinRel(0.0999255775063, 1e-11));
    CHECK_THAT(kolmogorov_q(1.358), WithinRel(0.0500267973344, 1e-11));
    CHECK_THAT(kolmogorov_q(1.628), WithinRel(0.00997552243118, 1e-11));
    CHECK_THAT(kolmogorov_q(2.0), WithinRel(0.00067092525578, 1e-10));
    CHECK_THAT(kolmogorov_q(0.05), WithinAbs(1.0, 1e-12));
}
