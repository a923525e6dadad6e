#pragma once

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "sch/experiments.hpp"
#include "sch/integrator.hpp"
#include "sch/model.hpp"
#include "sch/noise.hpp"
#include "sch/nonlinearity.hpp"
#include "sch/numerics.hpp"
#include "sch/spectral.hpp"

// Deterministic property suite covering all modules.  The checks are the
// structural and analytic invariants the solver rests on; the CLI
// `invariants` verb, the invariants study, and the acceptance suite all
// run this same code.

namespace sch::invariants {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct Options {
    int pair_trials = 1000;        // random pairs for the monotonicity/Lipschitz checks
    long census_steps = 10000;     // accepted steps for the defect census
    int moment_paths = 1000;       // paths for the moment-boundedness diagnostic
    bool run_worker_check = true;  // re-run a small study at several worker counts
};

namespace detail {

inline CheckResult make(const std::string& name, bool passed, const std::string& detail) {
    return CheckResult{name, passed, detail};
}

template <typename F>
std::string fmt(const char* label, F value) {
    std::ostringstream os;
    os << label << value;
    return os.str();
}

inline SpectralField uniform_field(std::uint64_t seed, int n, double amp) {
    SpectralField f(static_cast<std::size_t>(n));
    const rng::StreamKey key(seed);
    for (int i = 0; i < n; ++i)
        f.coeffs[i] = amp * (2.0 * rng::to_unit(key.word(static_cast<std::uint64_t>(i))) - 1.0);
    return f;
}

inline double point_value(const SpectralField& f, double x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
        acc += f.coeffs[i] * std::numbers::sqrt2 *
               std::cos(static_cast<double>(i + 1) * std::numbers::pi * x);
    return acc;
}

}  // namespace detail

inline CheckResult check_basis_orthonormality() {
    const Basis b = build_basis(16, 2.0);
    double worst = 0.0;
    for (int j = 0; j < 16; ++j) {
        SpectralField unit(16);
        unit.coeffs[j] = 1.0;
        const SpectralField back = to_spectral(to_physical(unit, b), b);
        for (int i = 0; i < 16; ++i)
            worst = std::max(worst, std::abs(back.coeffs[i] - (i == j ? 1.0 : 0.0)));
    }
    return detail::make("basis-orthonormality", worst <= 1e-10,
                        detail::fmt("max Gram defect ", worst));
}

inline CheckResult check_parseval() {
    const Basis b = build_basis(24, 2.0);
    double worst = 0.0;
    for (int trial = 0; trial < 32; ++trial) {
        const SpectralField f = detail::uniform_field(100 + trial, 24, 2.0);
        const PhysicalField p = to_physical(f, b);
        double quad = 0.0;
        for (double v : p.values) quad += v * v;
        quad = std::sqrt(quad / static_cast<double>(b.grid_size()));
        const SpectralField back = to_spectral(p, b);
        worst = std::max(worst, std::abs(sobolev_norm(back, 0.0) - quad));
        for (int i = 0; i < 24; ++i)
            worst = std::max(worst, std::abs(back.coeffs[i] - f.coeffs[i]));
    }
    return detail::make("parseval-roundtrip", worst <= 1e-10,
                        detail::fmt("max round-trip defect ", worst));
}

inline CheckResult check_fractional_power_group() {
    double worst = 0.0;
    const SpectralField f = detail::uniform_field(7, 16, 1.0);
    for (double alpha : {-1.5, -0.5, 0.25, 1.0}) {
        for (double beta : {-0.75, 0.5, 2.0}) {
            const SpectralField a =
                apply_fractional_power(apply_fractional_power(f, alpha), beta);
            const SpectralField c = apply_fractional_power(f, alpha + beta);
            for (std::size_t i = 0; i < f.size(); ++i) {
                const double scale = std::max(1.0, std::abs(c.coeffs[i]));
                worst = std::max(worst, std::abs(a.coeffs[i] - c.coeffs[i]) / scale);
            }
        }
    }
    return detail::make("fractional-power-group", worst <= 1e-12,
                        detail::fmt("max relative defect ", worst));
}

inline CheckResult check_semigroup_envelope() {
    double worst_excess = 0.0;
    for (int mu = 1; mu <= 4; ++mu) {
        const double e = mu / 4.0;
        const double c_mu = std::pow(e, e) * std::exp(-e);
        for (int j = 1; j <= 64; j *= 2) {
            const double lam = mode_eigenvalue(j - 1);
            for (double t = 1e-8; t <= 10.0; t *= 10.0) {
                const double lhs = std::pow(lam, mu / 2.0) * std::exp(-t * lam * lam);
                worst_excess = std::max(worst_excess, lhs * std::pow(t, e) / c_mu - 1.0);
            }
        }
    }
    return detail::make("semigroup-smoothing-envelope", worst_excess <= 1e-12,
                        detail::fmt("max envelope excess ", worst_excess));
}

inline CheckResult check_discrete_smoothing_stability() {
    auto log_grid = [](double lo, double hi, int n) {
        std::vector<double> g(n);
        for (int i = 0; i < n; ++i) g[i] = lo * std::pow(hi / lo, double(i) / double(n - 1));
        return g;
    };
    auto fitted = [&](int n_pts, int mu) {
        double best = 0.0;
        for (double jf : log_grid(1.0, 64.0, n_pts))
            for (double tau : log_grid(1e-5, 0.3, n_pts))
                for (double mf : log_grid(1.0, 512.0, n_pts)) {
                    const double lam = mode_eigenvalue(std::size_t(std::round(jf)) - 1);
                    const double m = std::round(mf);
                    best = std::max(best, std::pow(lam, mu) *
                                              std::pow(1.0 + tau * lam * lam, -m) *
                                              std::pow(m * tau, mu / 2.0));
                }
        return best;
    };
    double worst_drift = 0.0;
    for (int mu : {0, 1, 2}) {
        const double coarse = fitted(16, mu);
        const double fine = fitted(32, mu);
        worst_drift = std::max(worst_drift, std::abs(fine - coarse) / fine);
    }
    return detail::make("discrete-smoothing-stability", worst_drift <= 0.05,
                        detail::fmt("max constant drift under grid doubling ", worst_drift));
}

inline CheckResult check_square_sum_bound() {
    double worst = 0.0, closed_defect = 0.0;
    for (int j = 1; j <= 64; j *= 2) {
        const double lam = mode_eigenvalue(j - 1);
        for (double tau = 1e-5; tau <= 0.3; tau *= 10.0) {
            for (int m : {1, 4, 16, 64, 256}) {
                double s = 0.0;
                for (int jp = 1; jp <= m; ++jp)
                    s += tau * lam * lam * std::pow(1.0 + tau * lam * lam, -2.0 * jp);
                const double r = tau * lam * lam;
                const double closed = (1.0 - std::pow(1.0 + r, -2.0 * m)) / (2.0 + r);
                closed_defect = std::max(closed_defect, std::abs(s - closed) / std::max(closed, 1e-300));
                worst = std::max(worst, s);
            }
        }
    }
    return detail::make("discrete-square-sum-bound", worst <= 0.5 && closed_defect <= 1e-10,
                        detail::fmt("sup ", worst) + detail::fmt(", closed-form defect ", closed_defect));
}

inline CheckResult check_error_operator_bounds() {
    double worst4 = 0.0, worst0 = 0.0;
    for (int j = 1; j <= 64; j *= 2) {
        const double lam2 = mode_eigenvalue(j - 1) * mode_eigenvalue(j - 1);
        for (double tau = 1e-5; tau <= 0.3; tau *= 3.1623) {
            for (long k : {1L, 2L, 3L, 5L, 9L, 17L, 65L, 255L}) {
                for (double frac : {0.0, 0.5, 0.999999}) {
                    const double t = (static_cast<double>(k - 1) + frac) * tau;
                    const double gap = std::abs(
                        std::exp(-t * lam2) - std::pow(1.0 + tau * lam2, double(-k)));
                    worst4 = std::max(worst4, gap / (tau * lam2));
                    worst0 = std::max(worst0, gap);
                }
            }
        }
    }
    return detail::make("error-operator-bounds", worst4 <= 1.0 + 1e-9 && worst0 <= 2.0,
                        detail::fmt("fourth-order constant ", worst4) +
                            detail::fmt(", zeroth-order constant ", worst0));
}

inline CheckResult check_one_sided_condition(int trials) {
    const int n = 16, g = 4 * n;
    double worst = -1e300;
    for (int trial = 0; trial < trials; ++trial) {
        const SpectralField u = detail::uniform_field(2 * trial, n, 3.0);
        const SpectralField v = detail::uniform_field(2 * trial + 1, n, 3.0);
        double lhs = 0.0, rhs = 0.0;
        for (int k = 0; k < g; ++k) {
            const double x = (k + 0.5) / double(g);
            const double a = detail::point_value(u, x);
            const double c = detail::point_value(v, x);
            lhs += -((a * a * a - a) - (c * c * c - c)) * (a - c);
            rhs += (a - c) * (a - c);
        }
        worst = std::max(worst, (lhs - rhs) / double(g));
    }
    return detail::make("one-sided-condition", worst <= 1e-9,
                        detail::fmt("max <F(u)-F(v),v-u> - ||u-v||^2 = ", worst));
}

inline CheckResult check_local_lipschitz(int trials) {
    const int n = 12;
    const Basis b = build_basis(n);
    NemytskiiEval eval(b);
    double worst_ratio = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        const SpectralField u = detail::uniform_field(9000 + 2 * trial, n, 2.0);
        const SpectralField v = detail::uniform_field(9000 + 2 * trial + 1, n, 2.0);
        const double num = l2_norm(eval.apply_f(u) - eval.apply_f(v));
        const double den = (1.0 + eval.sup_norm(u) * eval.sup_norm(u) +
                            eval.sup_norm(v) * eval.sup_norm(v)) *
                           l2_norm(u - v);
        if (den > 0.0) worst_ratio = std::max(worst_ratio, num / den);
    }
    return detail::make("local-lipschitz-c3", worst_ratio <= 3.0,
                        detail::fmt("max ratio ", worst_ratio));
}

inline CheckResult check_dealias_exactness() {
    double worst = 0.0;
    for (int n : {8, 16, 32}) {
        const Basis b = build_basis(n);
        NemytskiiEval eval(b);
        const SpectralField v = detail::uniform_field(500 + n, n, 1.0);
        const SpectralField got = eval.apply_f(v);
        const int g = 4 * (2 * n + 2);
        for (int j = 1; j <= n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < g; ++k) {
                const double x = (k + 0.5) / double(g);
                const double u = detail::point_value(v, x);
                acc += (u * u * u - u) * std::numbers::sqrt2 *
                       std::cos(j * std::numbers::pi * x);
            }
            worst = std::max(worst, std::abs(got.coeffs[j - 1] - acc / g));
        }
    }
    return detail::make("dealias-exactness", worst <= 1e-10,
                        detail::fmt("max gap to oversampled quadrature ", worst));
}

inline CheckResult check_f_prime_fd_slope() {
    const int n = 8;
    const Basis b = build_basis(n);
    NemytskiiEval eval(b);
    const SpectralField v = detail::uniform_field(31, n, 0.8);
    const SpectralField y = detail::uniform_field(32, n, 0.8);
    const SpectralField fv = eval.apply_f(v);
    const SpectralField dir = eval.apply_f_prime(v, y);
    std::vector<double> lh, le;
    for (double h : {1e-2, 1e-3, 1e-4, 1e-5}) {
        const SpectralField fd = (1.0 / h) * (eval.apply_f(v + h * y) - fv);
        lh.push_back(std::log(h));
        le.push_back(std::log(l2_norm(fd - dir)));
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lh.size(); ++i) {
        sx += lh[i]; sy += le[i]; sxx += lh[i] * lh[i]; sxy += lh[i] * le[i];
    }
    const double nn = double(lh.size());
    const double slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
    return detail::make("f-prime-fd-slope", slope >= 0.9, detail::fmt("observed slope ", slope));
}

inline CheckResult check_gateaux_symmetry() {
    const int n = 10;
    const Basis b = build_basis(n);
    NemytskiiEval eval(b);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const SpectralField v = detail::uniform_field(3 * trial, n, 1.5);
        const SpectralField y = detail::uniform_field(3 * trial + 1, n, 1.5);
        const SpectralField z = detail::uniform_field(3 * trial + 2, n, 1.5);
        worst = std::max(worst, std::abs(l2_inner(eval.apply_f_prime(v, y), z) -
                                         l2_inner(eval.apply_f_prime(v, z), y)));
    }
    return detail::make("gateaux-symmetry", worst <= 1e-11, detail::fmt("max asymmetry ", worst));
}

inline CheckResult check_solver_defect_census(long census_steps) {
    ModelConfig cfg;
    cfg.n_modes = 32;
    cfg.horizon = 1.0;
    const int m_per_path = 500;
    const long paths = (census_steps + m_per_path - 1) / m_per_path;
    cfg.m_steps = m_per_path;

    std::vector<double> worst_per_path(paths, 0.0);
    std::vector<long> iters_per_path(paths, 0);
    const QSpectrum q = cfg.q_spectrum(cfg.n_modes);
    parallel_for(paths, [&](long p) {
        const NoiseTable table =
            build_noise_table(rng::derive_seed(99, "census", std::uint64_t(p)), cfg.horizon,
                              m_per_path, cfg.n_modes, q);
        const IncrementSequence inc = coarsen(table, m_per_path, cfg.n_modes);
        const Basis basis(cfg.n_modes, cfg.dealias_factor);
        NemytskiiEval eval(basis);
        NemytskiiEval referee(basis);
        SpectralField x = cfg.initial_state(cfg.n_modes);
        const double tau = cfg.horizon / m_per_path;
        double worst = 0.0;
        long iters = 0;
        for (int m = 0; m < m_per_path; ++m) {
            const SpectralField dw = inc.step_field(m);
            auto [next, stats] = backward_euler_step(x, dw, tau, cfg.solver, eval);
            worst = std::max(worst, step_defect(next, x, dw, tau, referee));
            iters += stats.iterations;
            x = std::move(next);
        }
        worst_per_path[p] = worst;
        iters_per_path[p] = iters;
    });
    double worst = 0.0;
    for (double w : worst_per_path) worst = std::max(worst, w);
    const bool ok = worst <= 2.0 * ModelConfig{}.solver.tol;
    return detail::make("solver-defect-census", ok,
                        detail::fmt("max re-evaluated defect over ", paths * m_per_path) +
                            detail::fmt(" steps: ", worst));
}

inline CheckResult check_fixed_point_iteration_census() {
    const Basis b = build_basis(64);
    NemytskiiEval eval(b);
    SolverConfig solver;
    int worst = 0;
    for (int trial = 0; trial < 25; ++trial) {
        SpectralField state(64);
        const rng::StreamKey key(4000 + trial);
        for (int i = 0; i < 64; ++i)
            state.coeffs[i] = (2.0 * rng::to_unit(key.word(i)) - 1.0) / std::pow(i + 1.0, 1.5);
        const double sup = eval.sup_norm(state);
        if (sup > 2.0) state = (2.0 / sup) * state;
        const SpectralField dw = detail::uniform_field(4500 + trial, 64, 0.01);
        auto [x, stats] = backward_euler_step(state, dw, 1e-3, solver, eval);
        if (stats.method != SolveMethod::fixed_point) return detail::make(
            "fixed-point-iteration-census", false, "Newton fallback triggered unexpectedly");
        worst = std::max(worst, stats.iterations);
    }
    return detail::make("fixed-point-iteration-census", worst <= 10,
                        detail::fmt("max iterations ", worst));
}

inline CheckResult check_noise_determinism_and_nesting() {
    const QSpectrum q8 = QSpectrum::power_law(2.0, 8);
    const QSpectrum q4 = QSpectrum::power_law(2.0, 4);
    const NoiseTable a = build_noise_table(42, 1.0, 64, 8, q8);
    const NoiseTable b = build_noise_table(42, 1.0, 64, 8, q8);
    const NoiseTable narrow = build_noise_table(42, 1.0, 64, 4, q4);
    const bool deterministic = a.draws() == b.draws();
    const bool nested = coarsen(a, 16, 4).dw == coarsen(narrow, 16, 4).dw;

    const IncrementSequence fine = coarsen(a, 16, 8);
    const IncrementSequence coarse = coarsen(a, 8, 8);
    bool telescoping = true;
    for (int m = 0; m < 8 && telescoping; ++m)
        for (int j = 0; j < 8; ++j)
            if (coarse.at(m, j) != fine.at(2 * m, j) + fine.at(2 * m + 1, j)) {
                telescoping = false;
                break;
            }
    return detail::make("noise-determinism-nesting-telescoping",
                        deterministic && nested && telescoping,
                        std::string("deterministic=") + (deterministic ? "yes" : "no") +
                            ", nested=" + (nested ? "yes" : "no") +
                            ", telescoping=" + (telescoping ? "yes" : "no"));
}

inline CheckResult check_linear_closed_form() {
    ModelConfig cfg;
    cfg.n_modes = 8;
    cfg.m_steps = 32;
    cfg.linear_mode = true;
    const QSpectrum q = cfg.q_spectrum(8);
    const NoiseTable table = build_noise_table(321, cfg.horizon, 32, 8, q);
    const IncrementSequence inc = coarsen(table, 32, 8);
    const SpectralField got = simulate_path(cfg, inc).state;
    const SpectralField x0 = cfg.initial_state(8);
    double worst = 0.0;
    const double tau = cfg.horizon / 32.0;
    for (int j = 0; j < 8; ++j) {
        const double lam = mode_eigenvalue(j);
        const double d = 1.0 + tau * lam * lam;
        double expect = std::pow(d, -32.0) * x0.coeffs[j];
        for (int m = 1; m <= 32; ++m) expect += std::pow(d, double(-(32 - m + 1))) * inc.at(m - 1, j);
        worst = std::max(worst,
                         std::abs(got.coeffs[j] - expect) / std::max(1e-30, std::abs(expect)));
    }
    return detail::make("linear-mode-closed-form", worst <= 1e-12,
                        detail::fmt("max relative gap ", worst));
}

// Sample L^2(Omega, H^2)-norm of X_T, i.e. sqrt of the mean of |X_T|_2^2,
// at M = 256 and M = 512 on coupled noise.  Finiteness plus a small drift
// under step doubling is the sanity diagnostic for moment boundedness of
// the scheme; it proves nothing, it guards against blow-up regressions.
inline CheckResult check_moment_boundedness(int paths) {
    ModelConfig cfg;
    cfg.n_modes = 32;
    const QSpectrum q = cfg.q_spectrum(32);
    std::vector<double> m256(paths), m512(paths);
    parallel_for(paths, [&](long p) {
        const NoiseTable table = build_noise_table(rng::derive_seed(7, "moment", std::uint64_t(p)),
                                                   cfg.horizon, 512, 32, q);
        ModelConfig c1 = cfg;
        c1.m_steps = 256;
        ModelConfig c2 = cfg;
        c2.m_steps = 512;
        const double n1 = sobolev_norm(simulate_path(c1, coarsen(table, 256, 32)).state, 2.0);
        const double n2 = sobolev_norm(simulate_path(c2, coarsen(table, 512, 32)).state, 2.0);
        m256[p] = n1 * n1;
        m512[p] = n2 * n2;
    });
    const double a = std::sqrt(pairwise_mean(m256));
    const double b = std::sqrt(pairwise_mean(m512));
    const double drift = std::abs(b - a) / std::max(a, 1e-300);
    return detail::make("moment-boundedness-diagnostic", std::isfinite(a) && drift < 0.05,
                        detail::fmt("L2(Omega) norm of |X_T|_2: ", a) +
                            detail::fmt(", drift under M doubling ", drift));
}

inline CheckResult check_worker_independence() {
    // A small coupled study must reduce to bit-identical estimates for any
    // worker count; parallel_for distributes work, slots fix the order.
    ModelConfig cfg;
    cfg.n_modes = 8;
    const std::vector<int> m_list{4, 8};
    auto run_with = [&](int workers) {
        if (workers >= 1) {
#ifdef _WIN32
            _putenv_s("SCH_THREADS", std::to_string(workers).c_str());
#else
            setenv("SCH_THREADS", std::to_string(workers).c_str(), 1);
#endif
        }
        const TestFunctional phi = TestFunctional::gauss(1.0);
        return run_coupled_temporal(cfg, m_list, 32, 8, 64, &phi, 5, "worker-check");
    };
    const char* saved = std::getenv("SCH_THREADS");
    const std::string saved_copy = saved ? saved : "";
    const StudyOutcome w1 = run_with(1);
    const StudyOutcome w4 = run_with(4);
    const StudyOutcome w8 = run_with(8);
#ifndef _WIN32
    if (saved)
        setenv("SCH_THREADS", saved_copy.c_str(), 1);
    else
        unsetenv("SCH_THREADS");
#endif
    const bool same = w1.weak->estimates == w4.weak->estimates &&
                      w4.weak->estimates == w8.weak->estimates &&
                      w1.strong.estimates == w4.strong.estimates &&
                      w4.strong.estimates == w8.strong.estimates &&
                      w1.weak->std_errors == w8.weak->std_errors;
    return detail::make("worker-count-independence", same,
                        same ? "estimates bit-identical for 1, 4, 8 workers"
                             : "estimates differ across worker counts");
}

inline std::vector<CheckResult> run_all(const Options& opts = {}) {
    std::vector<CheckResult> out;
    out.push_back(check_basis_orthonormality());
    out.push_back(check_parseval());
    out.push_back(check_fractional_power_group());
    out.push_back(check_semigroup_envelope());
    out.push_back(check_discrete_smoothing_stability());
    out.push_back(check_square_sum_bound());
    out.push_back(check_error_operator_bounds());
    out.push_back(check_one_sided_condition(opts.pair_trials));
    out.push_back(check_local_lipschitz(opts.pair_trials));
    out.push_back(check_dealias_exactness());
    out.push_back(check_f_prime_fd_slope());
    out.push_back(check_gateaux_symmetry());
    out.push_back(check_solver_defect_census(opts.census_steps));
    out.push_back(check_fixed_point_iteration_census());
    out.push_back(check_noise_determinism_and_nesting());
    out.push_back(check_linear_closed_form());
    out.push_back(check_moment_boundedness(opts.moment_paths));
    if (opts.run_worker_check) out.push_back(check_worker_independence());
    return out;
}

}  // namespace sch::invariants
