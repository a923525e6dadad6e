#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sch/integrator.hpp"
#include "sch/numerics.hpp"
#include "test_helpers.hpp"

using namespace sch;
using Catch::Approx;

namespace {

ModelConfig small_config(int n, int m, bool linear = false) {
    ModelConfig cfg;
    cfg.horizon = 1.0;
    cfg.n_modes = n;
    cfg.m_steps = m;
    cfg.linear_mode = linear;
    return cfg;
}

}  // namespace

TEST_CASE("backward Euler step, linear mode") {
    const Basis b = build_basis(4);
    NemytskiiEval eval(b);
    SolverConfig solver;

    SpectralField x_prev(4), dw(4);
    x_prev.coeffs[2] = 0.8;
    dw.coeffs[2] = -0.3;
    const double tau = 0.05;
    auto [x, stats] = backward_euler_step(x_prev, dw, tau, solver, eval, true);
    const double lam = b.lambda(2);
    REQUIRE(x.coeffs[2] == Approx((0.8 - 0.3) / (1.0 + tau * lam * lam)).epsilon(1e-14));
    REQUIRE(stats.final_residual == 0.0);
}

TEST_CASE("backward Euler step, trivial fixed point") {
    const Basis b = build_basis(4);
    NemytskiiEval eval(b);
    SolverConfig solver;
    auto [x, stats] = backward_euler_step(SpectralField(4), SpectralField(4), 0.01, solver, eval);
    for (double c : x.coeffs) REQUIRE(c == 0.0);
    REQUIRE(stats.iterations == 1);
    REQUIRE(stats.method == SolveMethod::fixed_point);
}

TEST_CASE("backward Euler step satisfies the defect tolerance") {
    const Basis b = build_basis(8);
    NemytskiiEval eval(b);
    SolverConfig solver;
    const double tau = 1e-3;
    for (int trial = 0; trial < 20; ++trial) {
        const SpectralField x_prev = sch::test::random_decaying_field(300 + trial, 8, 1.0, 1.0);
        const SpectralField dw = sch::test::random_field(600 + trial, 8, 0.02);
        auto [x, stats] = backward_euler_step(x_prev, dw, tau, solver, eval);
        REQUIRE(stats.final_residual <= solver.tol);
        // independent re-evaluation of the defect, F recomputed from scratch
        NemytskiiEval fresh(b);
        REQUIRE(step_defect(x, x_prev, dw, tau, fresh) <= 2.0 * solver.tol);
    }
}

TEST_CASE("solve_implicit basics") {
    const Basis b = build_basis(6);
    NemytskiiEval eval(b);
    SolverConfig solver;
    SECTION("zero right-hand side gives zero") {
        auto [x, stats] = solve_implicit(SpectralField(6), 0.01, solver, eval);
        for (double c : x.coeffs) REQUIRE(c == 0.0);
    }
    SECTION("non-finite rhs rejected") {
        SpectralField bad(6);
        bad.coeffs[0] = std::numeric_limits<double>::infinity();
        REQUIRE_THROWS_AS(solve_implicit(bad, 0.01, solver, eval), std::invalid_argument);
    }
}

TEST_CASE("fixed-point iteration count census in the contraction regime") {
    const Basis b = build_basis(64);
    NemytskiiEval eval(b);
    SolverConfig solver;
    const double tau = 1e-3;
    int worst = 0;
    for (int trial = 0; trial < 40; ++trial) {
        SpectralField state = sch::test::random_decaying_field(4000 + trial, 64, 1.0, 1.5);
        const double sup = eval.sup_norm(state);
        if (sup > 2.0) state = (2.0 / sup) * state;  // keep ||.||_V <= 2
        const SpectralField dw = sch::test::random_field(4500 + trial, 64, 0.01);
        auto [x, stats] = backward_euler_step(state, dw, tau, solver, eval);
        REQUIRE(stats.method == SolveMethod::fixed_point);
        worst = std::max(worst, stats.iterations);
    }
    INFO("worst fixed-point iteration count: " << worst);
    REQUIRE(worst <= 10);
}

TEST_CASE("Newton fallback converges on a stiff state") {
    // Construct a step whose exact solution is an amplitude-3 state at
    // tau = 0.1: there the multiplier 3u^2 - 1 makes the fixed-point map
    // expansive, so phase 1 stalls and the Newton phase has to finish.
    const Basis b = build_basis(64);
    NemytskiiEval eval(b);
    SolverConfig solver;
    const double tau = 0.1;
    SpectralField target = sch::test::random_decaying_field(77, 64, 1.0, 1.5);
    target = (3.0 / eval.sup_norm(target)) * target;
    SpectralField x_prev(64);
    const SpectralField drift = eval.apply_drift(target);
    for (int i = 0; i < 64; ++i) {
        const double lam = b.lambda(i);
        x_prev.coeffs[i] = (1.0 + tau * lam * lam) * target.coeffs[i] + tau * drift.coeffs[i];
    }
    auto [x, stats] = backward_euler_step(x_prev, SpectralField(64), tau, solver, eval);
    REQUIRE(stats.method == SolveMethod::newton);
    REQUIRE(stats.final_residual <= solver.tol);
    NemytskiiEval fresh(b);
    REQUIRE(step_defect(x, x_prev, SpectralField(64), tau, fresh) <= 2.0 * solver.tol);
}

TEST_CASE("simulate_path with one step reduces to one backward Euler step") {
    ModelConfig cfg = small_config(6, 1);
    const QSpectrum q = cfg.q_spectrum(6);
    const NoiseTable table = build_noise_table(123, cfg.horizon, 1, 6, q);
    const IncrementSequence inc = coarsen(table, 1, 6);

    const PathResult path = simulate_path(cfg, inc);

    const Basis b = build_basis(6);
    NemytskiiEval eval(b);
    auto [x, stats] =
        backward_euler_step(cfg.initial_state(6), inc.step_field(0), 1.0, cfg.solver, eval);
    for (int i = 0; i < 6; ++i) REQUIRE(path.state.coeffs[i] == x.coeffs[i]);
}

TEST_CASE("zero noise and zero initial datum stay at zero") {
    ModelConfig cfg = small_config(4, 8);
    cfg.initial_modes.clear();
    IncrementSequence inc;
    inc.steps = 8;
    inc.modes = 4;
    inc.tau = cfg.horizon / 8;
    inc.dw.assign(8 * 4, 0.0);
    const PathResult path = simulate_path(cfg, inc, /*track_diagnostics=*/true);
    for (double c : path.state.coeffs) REQUIRE(c == 0.0);
    REQUIRE(path.diagnostics.max_sup_norm == 0.0);
}

TEST_CASE("linear mode equals the closed-form recursion") {
    ModelConfig cfg = small_config(8, 32, /*linear=*/true);
    const QSpectrum q = cfg.q_spectrum(8);
    const NoiseTable table = build_noise_table(321, cfg.horizon, 32, 8, q);
    const IncrementSequence inc = coarsen(table, 32, 8);
    const PathResult path = simulate_path(cfg, inc);

    const double tau = cfg.horizon / 32.0;
    const SpectralField x0 = cfg.initial_state(8);
    for (int j = 0; j < 8; ++j) {
        const double lam = mode_eigenvalue(j);
        const double d = 1.0 + tau * lam * lam;
        double expect = std::pow(d, -32.0) * x0.coeffs[j];
        for (int m = 1; m <= 32; ++m)
            expect += std::pow(d, static_cast<double>(-(32 - m + 1))) * inc.at(m - 1, j);
        REQUIRE(path.state.coeffs[j] == Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("path failures carry the step index") {
    ModelConfig cfg = small_config(16, 4);
    cfg.solver.max_fixed_point_iters = 1;
    cfg.solver.max_newton_iters = 1;
    cfg.initial_modes = {{1, 40.0}};  // stiff enough that one iteration cannot converge
    cfg.horizon = 4.0;                // tau = 1
    const QSpectrum q = cfg.q_spectrum(16);
    const NoiseTable table = build_noise_table(9, cfg.horizon, 4, 16, q);
    const IncrementSequence inc = coarsen(table, 4, 16);
    try {
        simulate_path(cfg, inc);
        FAIL("expected NonConvergenceError");
    } catch (const NonConvergenceError& e) {
        REQUIRE(e.step_index >= 1);
        REQUIRE(e.last_residual > 0.0);
    }
}

TEST_CASE("simulate_path validates increment dimensions") {
    ModelConfig cfg = small_config(4, 8);
    const QSpectrum q = cfg.q_spectrum(4);
    const NoiseTable table = build_noise_table(5, cfg.horizon, 16, 4, q);
    const IncrementSequence inc = coarsen(table, 16, 4);
    REQUIRE_THROWS_AS(simulate_path(cfg, inc), std::invalid_argument);
}

TEST_CASE("exact linear solver with zero noise is the semigroup") {
    ModelConfig cfg = small_config(6, 16, /*linear=*/true);
    const QSpectrum zero_q = QSpectrum::custom(std::vector<double>(6, 0.0));
    const NoiseTable table = build_noise_table(11, cfg.horizon, 16, 6, zero_q);
    const SpectralField got = simulate_linear_exact(cfg, table);
    const SpectralField want = apply_semigroup(cfg.initial_state(6), cfg.horizon);
    for (int j = 0; j < 6; ++j) REQUIRE(got.coeffs[j] == Approx(want.coeffs[j]).margin(1e-15));
}

TEST_CASE("exact linear solver reproduces the OU law at T") {
    ModelConfig cfg = small_config(4, 16, /*linear=*/true);
    cfg.initial_modes.clear();
    const QSpectrum q = cfg.q_spectrum(4);
    const int k_paths = 10000;
    std::vector<double> v0(k_paths), v2(k_paths);
    for (int k = 0; k < k_paths; ++k) {
        const NoiseTable table = build_noise_table(50000 + k, cfg.horizon, 16, 4, q);
        const SpectralField x = simulate_linear_exact(cfg, table);
        v0[k] = x.coeffs[0];
        v2[k] = x.coeffs[2];
    }
    for (const auto& [col, j] : {std::pair{&v0, 0}, std::pair{&v2, 2}}) {
        const double rate = mode_eigenvalue(j) * mode_eigenvalue(j);
        const double target = q.q[j] * (-std::expm1(-2.0 * rate * cfg.horizon)) / (2.0 * rate);
        const double var = pairwise_variance(*col);
        const double se = target * std::sqrt(2.0 / (k_paths - 1.0));
        REQUIRE(std::abs(var - target) <= 4.0 * se);
    }
}

TEST_CASE("linear backward Euler strong error matches the quadrature formula") {
    ModelConfig cfg = small_config(4, 8, /*linear=*/true);
    const QSpectrum q = cfg.q_spectrum(4);
    const int m_ref = 64;
    const int k_paths = 4000;
    std::vector<double> gap_sq(k_paths);
    for (int k = 0; k < k_paths; ++k) {
        const NoiseTable table = build_noise_table(90000 + k, cfg.horizon, m_ref, 4, q);
        const SpectralField exact = simulate_linear_exact(cfg, table);
        const PathResult be = simulate_path(cfg, coarsen(table, 8, 4));
        const double d = l2_norm(exact - be.state);
        gap_sq[k] = d * d;
    }
    const double mean = pairwise_mean(gap_sq);
    const double se = standard_error(gap_sq);
    const double oracle = linear_strong_error_sq_oracle(cfg, 8);
    REQUIRE(std::abs(mean - oracle) <= 3.0 * se);
}

TEST_CASE("the closed-form linear error oracle agrees with numeric quadrature") {
    ModelConfig cfg = small_config(3, 4, /*linear=*/true);
    const QSpectrum q = cfg.q_spectrum(3);
    const double tau = cfg.horizon / 4.0;
    double numeric = 0.0;
    const int fine = 400000;  // the integrand has an O(1/rate) boundary layer at s = T
    for (int j = 0; j < 3; ++j) {
        const double rate = mode_eigenvalue(j) * mode_eigenvalue(j);
        double acc = 0.0;
        for (int k = 0; k < fine; ++k) {
            const double s = (k + 0.5) / static_cast<double>(fine) * cfg.horizon;
            const int m = static_cast<int>(std::floor(s / tau));
            const double w = std::pow(1.0 + tau * rate, static_cast<double>(-(4 - m)));
            const double g = std::exp(-rate * (cfg.horizon - s));
            acc += (g - w) * (g - w);
        }
        numeric += q.q[j] * acc * cfg.horizon / fine;
        const double x0j = cfg.initial_state(3).coeffs[j];
        const double det = std::exp(-rate * cfg.horizon) - std::pow(1.0 + tau * rate, -4.0);
        numeric += det * det * x0j * x0j;
    }
    REQUIRE(linear_strong_error_sq_oracle(cfg, 4) == Approx(numeric).epsilon(1e-6));
}

TEST_CASE("diagnostics track norms and iteration counts") {
    ModelConfig cfg = small_config(8, 16);
    const QSpectrum q = cfg.q_spectrum(8);
    const NoiseTable table = build_noise_table(2024, cfg.horizon, 16, 8, q);
    const PathResult path = simulate_path(cfg, coarsen(table, 16, 8), /*track_diagnostics=*/true);
    REQUIRE(path.diagnostics.max_sup_norm > 0.0);
    REQUIRE(path.diagnostics.max_h2_norm > 0.0);
    REQUIRE(path.diagnostics.total_iterations >= 16);
    REQUIRE(all_finite(path.state));
}

TEST_CASE("optional trajectory holds the initial state and every step") {
    ModelConfig cfg = small_config(4, 8);
    const QSpectrum q = cfg.q_spectrum(4);
    const NoiseTable table = build_noise_table(6, cfg.horizon, 8, 4, q);
    const PathResult path = simulate_path(cfg, coarsen(table, 8, 4), false, /*keep_trajectory=*/true);
    REQUIRE(path.trajectory.size() == 9);
    REQUIRE(path.trajectory.front().coeffs == cfg.initial_state(4).coeffs);
    REQUIRE(path.trajectory.back().coeffs == path.state.coeffs);
}
