#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sch/experiments.hpp"
#include "test_helpers.hpp"

using namespace sch;
using Catch::Approx;

TEST_CASE("test functionals") {
    const TestFunctional gauss = TestFunctional::gauss(1.0);
    SECTION("gauss_exp at zero is 1") {
        REQUIRE(evaluate_functional(gauss, SpectralField(4)) == 1.0);
    }
    SECTION("cosine pairing with orthogonal argument is 1") {
        SpectralField psi(4);
        psi.coeffs[0] = 2.0;
        SpectralField x(4);
        x.coeffs[2] = 5.0;  // orthogonal to psi
        const TestFunctional cos_phi = TestFunctional::cosine(psi);
        REQUIRE(evaluate_functional(cos_phi, x) == 1.0);
    }
    SECTION("derivative bounds are as recorded") {
        REQUIRE(gauss.first_derivative_bound() ==
                Approx(std::numbers::sqrt2 / std::exp(0.5)).epsilon(1e-14));
        REQUIRE(gauss.second_derivative_bound() == Approx(2.0).epsilon(1e-14));
        SpectralField psi(3);
        psi.coeffs[1] = 0.7;
        const TestFunctional cos_phi = TestFunctional::cosine(psi);
        REQUIRE(cos_phi.first_derivative_bound() == Approx(0.7).epsilon(1e-14));
        REQUIRE(cos_phi.second_derivative_bound() == Approx(0.49).epsilon(1e-14));
        const TestFunctional lin_phi = TestFunctional::linear(psi);
        REQUIRE(lin_phi.second_derivative_bound() == 0.0);
    }
    SECTION("finite-difference check of the gradient, slope >= 0.9") {
        for (const TestFunctional& phi :
             {TestFunctional::gauss(0.8), TestFunctional::cosine(sch::test::random_field(3, 6))}) {
            const SpectralField x = sch::test::random_field(5, 6);
            const SpectralField y = sch::test::random_field(6, 6);
            const double dphi = l2_inner(phi.gradient(x), y);
            std::vector<double> lh, le;
            for (double h : {1e-2, 1e-3, 1e-4}) {
                const double fd = (phi.evaluate(x + h * y) - phi.evaluate(x)) / h;
                lh.push_back(std::log(h));
                le.push_back(std::log(std::abs(fd - dphi)));
            }
            double sx = 0, sy = 0, sxx = 0, sxy = 0;
            for (std::size_t i = 0; i < lh.size(); ++i) {
                sx += lh[i];
                sy += le[i];
                sxx += lh[i] * lh[i];
                sxy += lh[i] * le[i];
            }
            const double nn = static_cast<double>(lh.size());
            REQUIRE((nn * sxy - sx * sy) / (nn * sxx - sx * sx) >= 0.9);
        }
        // the linear pairing has no curvature: finite differences agree to
        // rounding at any step size
        const TestFunctional lin = TestFunctional::linear(sch::test::random_field(4, 6));
        const SpectralField x = sch::test::random_field(5, 6);
        const SpectralField y = sch::test::random_field(6, 6);
        const double dphi = l2_inner(lin.gradient(x), y);
        for (double h : {1e-2, 1e-4}) {
            const double fd = (lin.evaluate(x + h * y) - lin.evaluate(x)) / h;
            REQUIRE(std::abs(fd - dphi) <= 1e-10);
        }
    }
}

TEST_CASE("fit_rate") {
    SECTION("exact quadratic data recovers slope 2") {
        std::vector<double> h{0.1, 0.05, 0.025, 0.0125}, err;
        for (double x : h) err.push_back(x * x);
        const RateFit fit = fit_rate(h, err);
        REQUIRE(fit.slope == Approx(2.0).margin(1e-12));
    }
    SECTION("single surviving point is NoSignal") {
        std::vector<double> h{0.1, 0.05}, err{1.0, 1e-6}, se{0.1, 1.0};
        REQUIRE_THROWS_AS(fit_rate(h, err, se), NoSignalError);
    }
    SECTION("all points excluded is NoSignal") {
        std::vector<double> h{0.1, 0.05}, err{1e-9, 1e-9}, se{1.0, 1.0};
        REQUIRE_THROWS_AS(fit_rate(h, err, se), NoSignalError);
    }
    SECTION("synthetic linear-rate data with 1 percent noise fits within [0.95, 1.05]") {
        std::vector<double> h, err;
        const rng::StreamKey key(17);
        int i = 0;
        for (double tau : {0.1, 0.05, 0.025, 0.0125, 0.00625}) {
            h.push_back(tau);
            err.push_back(3.0 * tau * (1.0 + 0.01 * (2.0 * rng::to_unit(key.word(i++)) - 1.0)));
        }
        const RateFit fit = fit_rate(h, err);
        REQUIRE(fit.slope >= 0.95);
        REQUIRE(fit.slope <= 1.05);
        REQUIRE(fit.ci95_halfwidth > 0.0);
    }
    SECTION("excluded points are reported") {
        std::vector<double> h{0.1, 0.05, 0.025}, err{0.01, 0.005, 1e-9}, se{1e-4, 1e-4, 1e-4};
        const RateFit fit = fit_rate(h, err, se);
        REQUIRE(fit.excluded_points == std::vector<std::size_t>{2});
        REQUIRE(fit.points_used == 2);
    }
    SECTION("invalid input rejected") {
        REQUIRE_THROWS_AS(fit_rate({0.1}, {1.0}), std::invalid_argument);
        REQUIRE_THROWS_AS(fit_rate({0.1, -0.1}, {1.0, 1.0}), std::invalid_argument);
    }
}

TEST_CASE("temporal coupled study basics") {
    ModelConfig cfg;
    cfg.n_modes = 8;
    const TestFunctional phi = TestFunctional::gauss(1.0);

    SECTION("level equal to the reference gives exactly zero") {
        const StudyOutcome out =
            run_coupled_temporal(cfg, {8, 32}, 32, 8, 16, &phi, 11, "t-test");
        REQUIRE(out.weak->estimates[1] == 0.0);
        REQUIRE(out.weak->std_errors[1] == 0.0);
        REQUIRE(out.strong.estimates[1] == 0.0);
        REQUIRE(out.weak->estimates[0] != 0.0);
    }
    SECTION("divisibility is enforced") {
        REQUIRE_THROWS_AS(run_coupled_temporal(cfg, {24}, 32, 8, 4, &phi, 1, "t"),
                          std::invalid_argument);
    }
    SECTION("reports are reproducible and independent of worker count") {
        const StudyOutcome a = run_coupled_temporal(cfg, {4, 8}, 32, 8, 32, &phi, 7, "t");
        const StudyOutcome b = run_coupled_temporal(cfg, {4, 8}, 32, 8, 32, &phi, 7, "t");
        REQUIRE(a.weak->estimates == b.weak->estimates);
        REQUIRE(a.strong.estimates == b.strong.estimates);
        REQUIRE(a.weak->std_errors == b.weak->std_errors);
    }
    SECTION("adding a level does not shift existing levels") {
        const StudyOutcome a = run_coupled_temporal(cfg, {4, 8}, 32, 8, 16, &phi, 7, "t");
        const StudyOutcome b = run_coupled_temporal(cfg, {4, 8, 16}, 32, 8, 16, &phi, 7, "t");
        REQUIRE(a.weak->estimates[0] == b.weak->estimates[0]);
        REQUIRE(a.weak->estimates[1] == b.weak->estimates[1]);
    }
}

TEST_CASE("spatial coupled study basics") {
    ModelConfig cfg;
    cfg.n_modes = 16;
    cfg.m_steps = 32;
    const TestFunctional phi = TestFunctional::gauss(1.0);

    SECTION("level equal to the reference gives exactly zero") {
        const StudyOutcome out = run_coupled_spatial(cfg, {4, 16}, 16, 32, 12, &phi, 3, "s");
        REQUIRE(out.strong.estimates[1] == 0.0);
        REQUIRE(out.weak->estimates[1] == 0.0);
        REQUIRE(out.strong.estimates[0] > 0.0);
    }
    SECTION("error is monotone non-increasing in N within 2 standard errors") {
        const StudyOutcome out =
            run_coupled_spatial(cfg, {2, 4, 8}, 16, 32, 64, nullptr, 19, "s");
        for (std::size_t i = 1; i < out.strong.estimates.size(); ++i) {
            const double slack = 2.0 * (out.strong.std_errors[i - 1] + out.strong.std_errors[i]);
            REQUIRE(out.strong.estimates[i] <= out.strong.estimates[i - 1] + slack);
        }
    }
    SECTION("weak estimate obeys the mean-value bound per point") {
        const StudyOutcome out = run_coupled_spatial(cfg, {2, 4, 8}, 16, 32, 64, &phi, 23, "s");
        const double bound = phi.first_derivative_bound();
        for (std::size_t i = 0; i < out.weak->estimates.size(); ++i) {
            REQUIRE(std::abs(out.weak->estimates[i]) <=
                    out.strong.estimates[i] * bound + 2.0 * out.weak->std_errors[i] + 1e-15);
        }
    }
    SECTION("out-of-range levels rejected") {
        REQUIRE_THROWS_AS(run_coupled_spatial(cfg, {32}, 16, 32, 4, nullptr, 1, "s"),
                          std::invalid_argument);
    }
}

TEST_CASE("standard errors shrink like 1/sqrt(K)") {
    ModelConfig cfg;
    cfg.n_modes = 8;
    const TestFunctional phi = TestFunctional::gauss(1.0);
    double ratio_sum = 0.0;
    const int reps = 3;
    for (int rep = 0; rep < reps; ++rep) {
        const StudyOutcome a =
            run_coupled_temporal(cfg, {4}, 32, 8, 128, &phi, 100 + rep, "se-scaling");
        const StudyOutcome b =
            run_coupled_temporal(cfg, {4}, 32, 8, 256, &phi, 200 + rep, "se-scaling");
        ratio_sum += b.weak->std_errors[0] / a.weak->std_errors[0];
    }
    const double mean_ratio = ratio_sum / reps;
    REQUIRE(mean_ratio >= 0.6);
    REQUIRE(mean_ratio <= 0.85);
}

TEST_CASE("linear oracle study matches the closed form at small scale") {
    ModelConfig cfg;
    cfg.n_modes = 4;
    const LinearOracleOutcome out = run_linear_oracle(cfg, {8, 16}, 64, 4, 2000, 5);
    for (std::size_t i = 0; i < out.mean_sq.size(); ++i) {
        REQUIRE(std::abs(out.mean_sq[i] - out.oracle_sq[i]) <= 3.0 * out.se_mean_sq[i]);
    }
}

TEST_CASE("path failures carry the level and path index") {
    ModelConfig cfg;
    cfg.n_modes = 8;
    cfg.horizon = 4.0;
    cfg.initial_modes = {{1, 40.0}};
    cfg.solver.max_fixed_point_iters = 1;
    cfg.solver.max_newton_iters = 1;
    try {
        run_coupled_temporal(cfg, {4}, 8, 8, 4, nullptr, 1, "fail-study");
        FAIL("expected StudyError");
    } catch (const StudyError& e) {
        REQUIRE(e.path_index >= 0);
        REQUIRE(e.level_value > 0.0);
    }
}

TEST_CASE("parallel_for reduces deterministically and propagates errors") {
    std::vector<double> slots(1000, 0.0);
    parallel_for(1000, [&](long i) { slots[i] = std::sqrt(static_cast<double>(i)); }, 8);
    const double total = pairwise_sum(slots);
    std::vector<double> serial(1000, 0.0);
    parallel_for(1000, [&](long i) { serial[i] = std::sqrt(static_cast<double>(i)); }, 1);
    REQUIRE(total == pairwise_sum(serial));

    REQUIRE_THROWS_AS(parallel_for(16,
                                   [](long i) {
                                       if (i == 7) throw std::runtime_error("boom");
                                   },
                                   4),
                      std::runtime_error);
}
