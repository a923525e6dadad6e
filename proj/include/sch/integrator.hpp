#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sch/model.hpp"
#include "sch/noise.hpp"
#include "sch/nonlinearity.hpp"
#include "sch/numerics.hpp"
#include "sch/rng.hpp"
#include "sch/spectral.hpp"

// Fully implicit backward Euler step for
//   X_m - X_{m-1} + tau A^2 X_m + tau A P_N F(X_m) = P_N dW_m.
// The step is solved as a fixed point of the preconditioned map
//   X -> (I + tau A^2)^{-1} (rhs - tau A P_N F(X)),   rhs = X_{m-1} + dW_m,
// with a dense Newton fallback when the contraction stalls.  Residuals are
// measured after left-preconditioning by (I + tau A^2)^{-1}; the raw defect
// carries an A^2 amplification that would make tolerances mesh-dependent.

namespace sch {

enum class SolveMethod { fixed_point, newton };

struct SolveStats {
    int iterations = 0;        // iterations used by the returning phase
    double final_residual = 0.0;
    SolveMethod method = SolveMethod::fixed_point;
};

class NonConvergenceError : public std::runtime_error {
  public:
    NonConvergenceError(double residual, long step)
        : std::runtime_error(step < 0
                                 ? "implicit solve did not converge (residual " +
                                       std::to_string(residual) + ")"
                                 : "implicit solve did not converge at step " +
                                       std::to_string(step) + " (residual " +
                                       std::to_string(residual) + ")"),
          last_residual(residual),
          step_index(step) {}

    double last_residual;
    long step_index;  // -1 when outside a path loop
};

namespace detail {

inline void apply_resolvent(SpectralField& f, double tau) {
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double lam = mode_eigenvalue(i);
        f.coeffs[i] /= 1.0 + tau * lam * lam;
    }
}

}  // namespace detail

// Solve X + tau A^2 X + tau A P_N F(X) = rhs.  With linear_mode the drift
// is absent and the resolvent is the whole answer.
inline std::pair<SpectralField, SolveStats> solve_implicit(const SpectralField& rhs, double tau,
                                                           const SolverConfig& cfg,
                                                           NemytskiiEval& eval,
                                                           bool linear_mode = false) {
    if (!(tau > 0.0)) throw std::invalid_argument("solve_implicit: tau must be > 0");
    if (!all_finite(rhs)) throw std::invalid_argument("solve_implicit: non-finite right-hand side");
    cfg.validate();
    const auto n = static_cast<std::size_t>(eval.basis().n_modes());
    if (rhs.size() > n) throw std::invalid_argument("solve_implicit: rhs has more modes than basis");

    if (linear_mode) {
        SpectralField x = rhs;
        x.coeffs.resize(n, 0.0);
        detail::apply_resolvent(x, tau);
        return {std::move(x), SolveStats{1, 0.0, SolveMethod::fixed_point}};
    }

    // Initial iterate: the linear solve, which is O(tau . drift) from the
    // fixed point and damps the stiff modes of any right-hand side.
    SpectralField x(n);
    for (std::size_t i = 0; i < rhs.size(); ++i) x.coeffs[i] = rhs.coeffs[i];
    detail::apply_resolvent(x, tau);

    auto preconditioned_map = [&](const SpectralField& y) {
        SpectralField g = eval.apply_drift(y);
        for (std::size_t i = 0; i < n; ++i) {
            const double r = i < rhs.size() ? rhs.coeffs[i] : 0.0;
            g.coeffs[i] = r - tau * g.coeffs[i];
        }
        detail::apply_resolvent(g, tau);
        return g;
    };

    SpectralField best = x;
    double best_res = std::numeric_limits<double>::infinity();

    // Phase 1: damped fixed point on the preconditioned map.
    for (int it = 1; it <= cfg.max_fixed_point_iters; ++it) {
        const SpectralField g = preconditioned_map(x);
        const double res = l2_norm(x - g);
        if (res <= cfg.tol)
            return {std::move(x), SolveStats{it, res, SolveMethod::fixed_point}};
        if (res < best_res) {
            best_res = res;
            best = x;
        }
        if (cfg.damping == 1.0) {
            x = g;
        } else {
            for (std::size_t i = 0; i < n; ++i)
                x.coeffs[i] = (1.0 - cfg.damping) * x.coeffs[i] + cfg.damping * g.coeffs[i];
        }
        if (!all_finite(x)) break;  // divergence; hand over to Newton from the best iterate
    }

    // Phase 2: Newton on G(X) = X - map(X), Jacobian
    // I + tau (I + tau A^2)^{-1} A B(X) with B the multiplication matrix
    // of f'(X).  Dense solve; N is small by construction.
    x = best;
    const Basis& basis = eval.basis();
    double res = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= cfg.max_newton_iters; ++it) {
        const SpectralField g = preconditioned_map(x);
        SpectralField defect = x - g;
        res = l2_norm(defect);
        if (res <= cfg.tol) return {std::move(x), SolveStats{it, res, SolveMethod::newton}};

        std::vector<double> jac = eval.multiplier_matrix(x);
        for (std::size_t i = 0; i < n; ++i) {
            const double lam = basis.lambda(i);
            const double scale = tau * lam / (1.0 + tau * lam * lam);
            double* row = &jac[i * n];
            for (std::size_t l = 0; l < n; ++l) row[l] *= scale;
            row[i] += 1.0;
        }
        std::vector<double> delta(n);
        for (std::size_t i = 0; i < n; ++i) delta[i] = -defect.coeffs[i];
        detail::lu_solve_in_place(jac, delta, n);

        // Backtracking on the preconditioned residual.
        double alpha = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 8; ++bt) {
            SpectralField trial = x;
            for (std::size_t i = 0; i < n; ++i) trial.coeffs[i] += alpha * delta[i];
            if (all_finite(trial)) {
                const SpectralField gt = preconditioned_map(trial);
                const double rt = l2_norm(trial - gt);
                if (rt < res) {
                    x = std::move(trial);
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if (!accepted) throw NonConvergenceError(res, -1);
    }
    throw NonConvergenceError(res, -1);
}

// One implicit Euler step from x_prev with noise increment dw.
inline std::pair<SpectralField, SolveStats> backward_euler_step(const SpectralField& x_prev,
                                                                const SpectralField& dw, double tau,
                                                                const SolverConfig& cfg,
                                                                NemytskiiEval& eval,
                                                                bool linear_mode = false) {
    if (!all_finite(x_prev) || !all_finite(dw))
        throw std::invalid_argument("backward_euler_step: non-finite input");
    return solve_implicit(x_prev + dw, tau, cfg, eval, linear_mode);
}

// Independent re-evaluation of the step defect: recomputes F from scratch
// and returns the preconditioned residual of
// x + tau A^2 x + tau A P_N F(x) - (x_prev + dw).
inline double step_defect(const SpectralField& x, const SpectralField& x_prev,
                          const SpectralField& dw, double tau, NemytskiiEval& eval,
                          bool linear_mode = false) {
    const auto n = static_cast<std::size_t>(eval.basis().n_modes());
    SpectralField drift(n);
    if (!linear_mode) drift = eval.apply_drift(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lam = mode_eigenvalue(i);
        const double denom = 1.0 + tau * lam * lam;
        const double xi = i < x.size() ? x.coeffs[i] : 0.0;
        const double pi = i < x_prev.size() ? x_prev.coeffs[i] : 0.0;
        const double wi = i < dw.size() ? dw.coeffs[i] : 0.0;
        const double defect = xi * denom + tau * drift.coeffs[i] - (pi + wi);
        const double pre = defect / denom;
        acc += pre * pre;
    }
    return std::sqrt(acc);
}

struct PathDiagnostics {
    double max_sup_norm = 0.0;   // sup over steps of ||X||_V (grid sup)
    double max_h2_norm = 0.0;    // sup over steps of |X|_2
    long total_iterations = 0;
    int newton_steps = 0;
};

struct PathResult {
    SpectralField state;
    PathDiagnostics diagnostics;
    std::vector<SpectralField> trajectory;  // filled only on request
};

// Run the scheme over all increments.  The step count of the increment
// sequence must match the configured M.
inline PathResult simulate_path(const ModelConfig& cfg, const IncrementSequence& increments,
                                bool track_diagnostics = false, bool keep_trajectory = false) {
    cfg.validate();  // throws on hard errors; decay warnings are the caller's concern
    if (increments.steps != cfg.m_steps)
        throw std::invalid_argument("simulate_path: increment sequence has " +
                                    std::to_string(increments.steps) + " steps, config says M = " +
                                    std::to_string(cfg.m_steps));
    if (increments.modes != cfg.n_modes)
        throw std::invalid_argument("simulate_path: increment sequence has " +
                                    std::to_string(increments.modes) + " modes, config says N = " +
                                    std::to_string(cfg.n_modes));
    const double tau = cfg.horizon / static_cast<double>(cfg.m_steps);

    Basis basis(cfg.n_modes, cfg.dealias_factor);
    NemytskiiEval eval(basis);
    PathResult out;
    out.state = cfg.initial_state(cfg.n_modes);
    if (keep_trajectory) out.trajectory.push_back(out.state);

    for (int m = 0; m < cfg.m_steps; ++m) {
        const SpectralField dw = increments.step_field(m);
        try {
            auto [next, stats] = backward_euler_step(out.state, dw, tau, cfg.solver, eval,
                                                     cfg.linear_mode);
            out.state = std::move(next);
            out.diagnostics.total_iterations += stats.iterations;
            if (stats.method == SolveMethod::newton) ++out.diagnostics.newton_steps;
        } catch (const NonConvergenceError& e) {
            throw NonConvergenceError(e.last_residual, m + 1);
        }
        if (!all_finite(out.state))
            throw std::runtime_error("simulate_path: non-finite state at step " +
                                     std::to_string(m + 1));
        if (track_diagnostics) {
            out.diagnostics.max_sup_norm =
                std::max(out.diagnostics.max_sup_norm, eval.sup_norm(out.state));
            out.diagnostics.max_h2_norm =
                std::max(out.diagnostics.max_h2_norm, sobolev_norm(out.state, 2.0));
        }
        if (keep_trajectory) out.trajectory.push_back(out.state);
    }
    return out;
}

// Distributionally exact solution of the linear equation (F absent) at
// t = T, coupled to the given noise table.  Per mode the solution is
// Gaussian given the fine increments: its conditional mean is the
// increment-averaged exponential kernel, and the conditional remainder
// (the part of the stochastic convolution the discrete increments cannot
// see) is drawn independently with its exact variance.  The result has
// the exact joint law with every sequence coarsened from the same table.
inline SpectralField simulate_linear_exact(const ModelConfig& cfg, const NoiseTable& table) {
    if (!cfg.linear_mode)
        throw std::invalid_argument("simulate_linear_exact: the nonlinearity must be disabled");
    if (cfg.n_modes > table.fine_modes())
        throw std::invalid_argument("simulate_linear_exact: config N exceeds table N_ref");
    if (cfg.horizon != table.horizon())
        throw std::invalid_argument("simulate_linear_exact: config and table horizons differ");
    const int m_ref = table.fine_steps();
    const double tau = table.tau_ref();
    const double horizon = table.horizon();
    const SpectralField x0 = cfg.initial_state(cfg.n_modes);
    const rng::StreamKey root(table.seed());

    SpectralField out(static_cast<std::size_t>(cfg.n_modes));
    for (int j = 0; j < cfg.n_modes; ++j) {
        const double rate = mode_eigenvalue(j) * mode_eigenvalue(j);
        const double decay_step = std::exp(-rate * tau);
        // interval average of the kernel: (1 - e^{-rate tau})/(rate tau)
        const double phi = -std::expm1(-rate * tau) / (rate * tau);

        double conv = 0.0;  // sum_i e^{-rate (T - t_i)} phi dW_i via Horner in ascending i
        for (int i = 0; i < m_ref; ++i)
            conv = decay_step * conv + phi * table.fine_increment(i, j);

        // total kernel energy minus what the increments explain
        const double total = -std::expm1(-2.0 * rate * horizon) / (2.0 * rate);
        const double geo = std::expm1(-2.0 * rate * horizon) / std::expm1(-2.0 * rate * tau);
        double residual_var = table.q_spectrum().q[j] * (total - tau * phi * phi * geo);
        if (residual_var < 0.0) residual_var = 0.0;

        const rng::StreamKey stream = root.child("linres").child(static_cast<std::uint64_t>(j));
        out.coeffs[j] = std::exp(-rate * horizon) * x0.coeffs[j] + conv +
                        std::sqrt(residual_var) * rng::standard_normal(stream, 0);
    }
    return out;
}

// Expected squared pathwise gap at T between the exact linear solution and
// backward Euler at M steps, both driven by the same noise:
//   sum_j [ (e^{-lambda_j^2 T} - (1 + tau lambda_j^2)^{-M})^2 x0_j^2
//           + q_j int_0^T (e^{-lambda_j^2 (T-s)} - (1 + tau lambda_j^2)^{-(M - floor(s/tau))})^2 ds ].
// The integral is evaluated in closed form per step interval.
inline double linear_strong_error_sq_oracle(const ModelConfig& cfg, int m_steps) {
    const double horizon = cfg.horizon;
    const double tau = horizon / static_cast<double>(m_steps);
    const QSpectrum q = cfg.q_spectrum(cfg.n_modes);
    const SpectralField x0 = cfg.initial_state(cfg.n_modes);

    double total = 0.0;
    for (int j = 0; j < cfg.n_modes; ++j) {
        const double rate = mode_eigenvalue(j) * mode_eigenvalue(j);
        const double bigr = 1.0 + tau * rate;
        const double det_gap =
            std::exp(-rate * horizon) - std::pow(bigr, static_cast<double>(-m_steps));
        total += det_gap * det_gap * x0.coeffs[j] * x0.coeffs[j];

        double integral = 0.0;
        for (int m = 1; m <= m_steps; ++m) {
            // s in [t_{m-1}, t_m): discrete weight c = (1 + tau rate)^{-(M - m + 1)}
            const double c = std::pow(bigr, static_cast<double>(-(m_steps - m + 1)));
            const double a_hi = horizon - (m - 1) * tau;  // T - s at the left endpoint
            const double a_lo = horizon - m * tau;
            // int e^{-2 rate (T-s)} ds over the interval
            const double i2 = (std::exp(-2.0 * rate * a_lo) - std::exp(-2.0 * rate * a_hi)) /
                              (2.0 * rate);
            // int e^{-rate (T-s)} ds
            const double i1 = (std::exp(-rate * a_lo) - std::exp(-rate * a_hi)) / rate;
            integral += i2 - 2.0 * c * i1 + c * c * tau;
        }
        total += q.q[j] * integral;
    }
    return total;
}

}  // namespace sch
