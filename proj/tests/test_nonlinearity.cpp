#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sch/nonlinearity.hpp"
#include "sch/spectral.hpp"
#include "test_helpers.hpp"

using namespace sch;
using Catch::Approx;

namespace {

// Independent oracle: spectral coefficients of f(v) = v^3 - v by heavily
// oversampled midpoint quadrature with direct point evaluation.
SpectralField quadrature_f_oracle(const SpectralField& v, int n_modes, int oversample) {
    const int g = oversample * (2 * n_modes + 2);
    SpectralField out(static_cast<std::size_t>(n_modes));
    for (int j = 1; j <= n_modes; ++j) {
        double acc = 0.0;
        for (int k = 0; k < g; ++k) {
            const double x = (static_cast<double>(k) + 0.5) / static_cast<double>(g);
            const double u = sch::test::point_value(v, x);
            acc += (u * u * u - u) * std::numbers::sqrt2 * std::cos(j * std::numbers::pi * x);
        }
        out.coeffs[j - 1] = acc / static_cast<double>(g);
    }
    return out;
}

}  // namespace

TEST_CASE("apply_f basics") {
    const Basis b = build_basis(4);
    NemytskiiEval eval(b);

    SECTION("f(0) = 0") {
        const SpectralField out = eval.apply_f(SpectralField(4));
        for (double c : out.coeffs) REQUIRE(c == 0.0);
    }
    SECTION("cubic of a single mode lands on modes 1 and 3") {
        const double a = 0.7;
        SpectralField v(4);
        v.coeffs[0] = a;
        const SpectralField out = eval.apply_f(v);
        REQUIRE(out.coeffs[0] == Approx(1.5 * a * a * a - a).margin(1e-12));
        REQUIRE(out.coeffs[2] == Approx(0.5 * a * a * a).margin(1e-12));
        REQUIRE(std::abs(out.coeffs[1]) < 1e-12);
        REQUIRE(std::abs(out.coeffs[3]) < 1e-12);
    }
    SECTION("mode 3 content is truncated away at N = 1") {
        const Basis b1 = build_basis(1);
        NemytskiiEval eval1(b1);
        const double a = 0.7;
        SpectralField v(1);
        v.coeffs[0] = a;
        const SpectralField out = eval1.apply_f(v);
        REQUIRE(out.size() == 1);
        REQUIRE(out.coeffs[0] == Approx(1.5 * a * a * a - a).margin(1e-12));
    }
    SECTION("non-finite input rejected") {
        SpectralField v(4);
        v.coeffs[1] = std::numeric_limits<double>::quiet_NaN();
        REQUIRE_THROWS_AS(eval.apply_f(v), std::invalid_argument);
    }
}

TEST_CASE("apply_f matches the oversampled quadrature oracle") {
    for (int n : {4, 16, 32}) {
        const Basis b = build_basis(n);
        NemytskiiEval eval(b);
        const SpectralField v = sch::test::random_field(100 + n, n, 1.0);
        const SpectralField got = eval.apply_f(v);
        const SpectralField want = quadrature_f_oracle(v, n, 4);
        for (int i = 0; i < n; ++i) REQUIRE(got.coeffs[i] == Approx(want.coeffs[i]).margin(1e-10));
    }
}

TEST_CASE("apply_f output is mean-zero and mode-limited") {
    const int n = 8;
    const Basis b = build_basis(n);
    NemytskiiEval eval(b);
    const SpectralField v = sch::test::random_field(55, n, 1.2);
    const SpectralField out = eval.apply_f(v);
    REQUIRE(out.size() == static_cast<std::size_t>(n));
    const PhysicalField p = to_physical(out, b);
    REQUIRE(std::abs(b.grid_mean(p)) < 1e-12);
}

TEST_CASE("apply_f_prime") {
    const Basis b = build_basis(8);
    NemytskiiEval eval(b);
    SECTION("f'(0) y = -y") {
        const SpectralField y = sch::test::random_field(9, 8);
        const SpectralField out = eval.apply_f_prime(SpectralField(8), y);
        for (int i = 0; i < 8; ++i) REQUIRE(out.coeffs[i] == Approx(-y.coeffs[i]).margin(1e-13));
    }
    SECTION("directional derivative consistency, slope >= 0.9") {
        const SpectralField v = sch::test::random_field(10, 8, 0.8);
        const SpectralField y = sch::test::random_field(11, 8, 0.8);
        const SpectralField fv = eval.apply_f(v);
        const SpectralField dir = eval.apply_f_prime(v, y);
        std::vector<double> lh, le;
        for (double h : {1e-2, 1e-3, 1e-4, 1e-5}) {
            const SpectralField fvh = eval.apply_f(v + h * y);
            const SpectralField fd = (1.0 / h) * (fvh - fv);
            le.push_back(std::log(l2_norm(fd - dir)));
            lh.push_back(std::log(h));
        }
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < lh.size(); ++i) {
            sx += lh[i];
            sy += le[i];
            sxx += lh[i] * lh[i];
            sxy += lh[i] * le[i];
        }
        const double nn = static_cast<double>(lh.size());
        const double slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
        REQUIRE(slope >= 0.9);
    }
    SECTION("the Gateaux form is symmetric") {
        const SpectralField v = sch::test::random_field(12, 8, 1.5);
        const SpectralField y = sch::test::random_field(13, 8, 1.5);
        const SpectralField z = sch::test::random_field(14, 8, 1.5);
        const double a = l2_inner(eval.apply_f_prime(v, y), z);
        const double c = l2_inner(eval.apply_f_prime(v, z), y);
        REQUIRE(a == Approx(c).margin(1e-11));
    }
}

TEST_CASE("apply_drift") {
    const Basis b = build_basis(4);
    NemytskiiEval eval(b);
    SECTION("drift of zero is zero") {
        const SpectralField out = eval.apply_drift(SpectralField(4));
        for (double c : out.coeffs) REQUIRE(c == 0.0);
    }
    SECTION("single mode input scales f-output modes by the eigenvalues") {
        const double a = 0.9;
        SpectralField v(4);
        v.coeffs[0] = a;
        const SpectralField out = eval.apply_drift(v);
        REQUIRE(out.coeffs[0] == Approx(b.lambda(0) * (1.5 * a * a * a - a)).margin(1e-11));
        REQUIRE(out.coeffs[2] == Approx(b.lambda(2) * 0.5 * a * a * a).margin(1e-11));
    }
    SECTION("cubic homogeneity breaks linearity") {
        SpectralField v(4);
        v.coeffs[0] = 1.0;
        const SpectralField d1 = eval.apply_drift(v);
        const SpectralField d2 = eval.apply_drift(2.0 * v);
        REQUIRE(std::abs(d2.coeffs[0] - 2.0 * d1.coeffs[0]) > 1e-6);
    }
}

TEST_CASE("one-sided condition on random pairs") {
    // -<F(u)-F(v), u-v> <= ||u-v||^2, inner products by grid quadrature
    const int n = 16;
    const int g = 4 * n;  // independent quadrature grid
    const Basis b = build_basis(n);
    NemytskiiEval eval(b);
    for (int trial = 0; trial < 1000; ++trial) {
        const SpectralField u = sch::test::random_field(2 * trial, n, 3.0);
        const SpectralField v = sch::test::random_field(2 * trial + 1, n, 3.0);
        double lhs = 0.0, rhs = 0.0;
        for (int k = 0; k < g; ++k) {
            const double x = (static_cast<double>(k) + 0.5) / static_cast<double>(g);
            const double a = sch::test::point_value(u, x);
            const double c = sch::test::point_value(v, x);
            const double fa = a * a * a - a;
            const double fc = c * c * c - c;
            lhs += -(fa - fc) * (a - c);
            rhs += (a - c) * (a - c);
        }
        lhs /= g;
        rhs /= g;
        REQUIRE(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
    }
}

TEST_CASE("local Lipschitz bound with constant 3") {
    const int n = 12;
    const Basis b = build_basis(n);
    NemytskiiEval eval(b);
    for (int trial = 0; trial < 300; ++trial) {
        const SpectralField u = sch::test::random_field(7000 + 2 * trial, n, 2.0);
        const SpectralField v = sch::test::random_field(7000 + 2 * trial + 1, n, 2.0);
        const double fu_fv = l2_norm(eval.apply_f(u) - eval.apply_f(v));
        const double uv = l2_norm(u - v);
        const double sup_u = eval.sup_norm(u);
        const double sup_v = eval.sup_norm(v);
        REQUIRE(fu_fv <= 3.0 * (1.0 + sup_u * sup_u + sup_v * sup_v) * uv * (1.0 + 1e-12));
    }
}

TEST_CASE("evaluation grid is at least the dealias size") {
    const Basis b = build_basis(8, 2.0);
    NemytskiiEval eval(b);
    REQUIRE(eval.grid_size() >= 2 * 8);
    const Basis wide = build_basis(8, 4.0);
    NemytskiiEval eval_wide(wide);
    REQUIRE(eval_wide.grid_size() >= wide.grid_size());
}
