#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "sch/integrator.hpp"
#include "sch/model.hpp"
#include "sch/noise.hpp"
#include "sch/numerics.hpp"
#include "sch/rng.hpp"
#include "sch/spectral.hpp"

// Monte Carlo estimation of weak and strong discretization errors.  Every
// study couples each coarse level to a fine reference through one noise
// table per sample path (common random numbers): the reference path is
// simulated once per sample and reused across all levels.  Per-path
// results land in pre-indexed slots and are reduced by deterministic
// pairwise summation, so reports are byte-identical for any worker count.

namespace sch {

// ---------------------------------------------------------------------------
// Test functionals

// Smooth functionals with recorded derivative bounds.  All three have
// bounded first and second Frechet derivatives; the linear pairing is the
// unbounded-but-smooth representative kept behind the same interface.
struct TestFunctional {
    enum class Kind { gauss_exp, cosine_pairing, linear_pairing };

    Kind kind = Kind::gauss_exp;
    double sigma = 1.0;       // gauss_exp length scale
    SpectralField direction;  // psi for the pairing kinds

    static TestFunctional gauss(double sigma) {
        if (!(sigma > 0.0)) throw std::invalid_argument("TestFunctional: sigma must be > 0");
        TestFunctional f;
        f.kind = Kind::gauss_exp;
        f.sigma = sigma;
        return f;
    }
    static TestFunctional cosine(SpectralField psi) {
        TestFunctional f;
        f.kind = Kind::cosine_pairing;
        f.direction = std::move(psi);
        return f;
    }
    static TestFunctional linear(SpectralField psi) {
        TestFunctional f;
        f.kind = Kind::linear_pairing;
        f.direction = std::move(psi);
        return f;
    }

    double evaluate(const SpectralField& x) const {
        switch (kind) {
            case Kind::gauss_exp: {
                const double r2 = l2_inner(x, x);
                return std::exp(-r2 / (sigma * sigma));
            }
            case Kind::cosine_pairing:
                return std::cos(l2_inner(x, direction));
            case Kind::linear_pairing:
                return l2_inner(x, direction);
        }
        return 0.0;
    }

    SpectralField gradient(const SpectralField& x) const {
        switch (kind) {
            case Kind::gauss_exp: {
                const double r2 = l2_inner(x, x);
                return (-2.0 / (sigma * sigma) * std::exp(-r2 / (sigma * sigma))) * x;
            }
            case Kind::cosine_pairing:
                return -std::sin(l2_inner(x, direction)) * direction;
            case Kind::linear_pairing:
                return direction;
        }
        return {};
    }

    // sup_x ||Phi'(x)||
    double first_derivative_bound() const {
        switch (kind) {
            case Kind::gauss_exp:
                return std::numbers::sqrt2 / (sigma * std::exp(0.5));
            case Kind::cosine_pairing:
            case Kind::linear_pairing:
                return l2_norm(direction);
        }
        return 0.0;
    }

    // sup_x ||Phi''(x)||
    double second_derivative_bound() const {
        switch (kind) {
            case Kind::gauss_exp:
                return 2.0 / (sigma * sigma);
            case Kind::cosine_pairing: {
                const double p = l2_norm(direction);
                return p * p;
            }
            case Kind::linear_pairing:
                return 0.0;
        }
        return 0.0;
    }

    const char* kind_name() const {
        switch (kind) {
            case Kind::gauss_exp: return "gauss_exp";
            case Kind::cosine_pairing: return "cosine_pairing";
            case Kind::linear_pairing: return "linear_pairing";
        }
        return "?";
    }
};

inline double evaluate_functional(const TestFunctional& phi, const SpectralField& x) {
    if (!all_finite(x)) throw std::invalid_argument("evaluate_functional: non-finite field");
    return phi.evaluate(x);
}

// ---------------------------------------------------------------------------
// Log-log rate fitting

class NoSignalError : public std::runtime_error {
  public:
    explicit NoSignalError(const std::string& what) : std::runtime_error(what) {}
};

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double ci95_halfwidth = 0.0;  // on the slope
    double residual_rms = 0.0;    // of the log-log least squares
    std::vector<std::size_t> excluded_points;
    std::size_t points_used = 0;
};

// Least squares of log(error) against log(h).  Points whose error is
// within 2 standard errors of zero carry no rate information and are
// excluded (and reported); fewer than 2 survivors is a NoSignal error.
// Optional per-point weights apply to the least squares.
inline RateFit fit_rate(const std::vector<double>& h, const std::vector<double>& err,
                        const std::vector<double>& std_errors = {},
                        const std::vector<double>& weights = {}) {
    if (h.size() != err.size() || h.size() < 2)
        throw std::invalid_argument("fit_rate: need at least 2 (h, error) points");
    if (!std_errors.empty() && std_errors.size() != h.size())
        throw std::invalid_argument("fit_rate: standard error vector length mismatch");
    if (!weights.empty() && weights.size() != h.size())
        throw std::invalid_argument("fit_rate: weight vector length mismatch");

    RateFit fit;
    std::vector<double> lx, ly, lw;
    for (std::size_t i = 0; i < h.size(); ++i) {
        if (!(h[i] > 0.0)) throw std::invalid_argument("fit_rate: h values must be positive");
        const double e = std::abs(err[i]);
        if (!std_errors.empty() && e <= 2.0 * std_errors[i]) {
            fit.excluded_points.push_back(i);
            continue;
        }
        if (!(e > 0.0)) {
            fit.excluded_points.push_back(i);
            continue;
        }
        lx.push_back(std::log(h[i]));
        ly.push_back(std::log(e));
        lw.push_back(weights.empty() ? 1.0 : weights[i]);
    }
    fit.points_used = lx.size();
    if (lx.size() < 2)
        throw NoSignalError("fit_rate: fewer than 2 points carry signal (" +
                            std::to_string(lx.size()) + " surviving)");

    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sw += lw[i];
        sx += lw[i] * lx[i];
        sy += lw[i] * ly[i];
        sxx += lw[i] * lx[i] * lx[i];
        sxy += lw[i] * lx[i] * ly[i];
    }
    const double denom = sw * sxx - sx * sx;
    if (!(denom > 0.0)) throw NoSignalError("fit_rate: degenerate abscissae");
    fit.slope = (sw * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / sw;

    double rss = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
        rss += lw[i] * r * r;
    }
    fit.residual_rms = std::sqrt(rss / static_cast<double>(lx.size()));
    if (lx.size() > 2) {
        const double s2 = rss / static_cast<double>(lx.size() - 2);
        const double se_slope = std::sqrt(s2 * sw / denom);
        fit.ci95_halfwidth = detail::t_quantile_975(lx.size() - 2) * se_slope;
    } else {
        fit.ci95_halfwidth = std::numeric_limits<double>::infinity();
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Reports

struct ErrorReport {
    std::string study;
    std::vector<double> grid;        // level values (M or N)
    std::vector<double> h;           // abscissae for rate fitting (tau or 1/N)
    std::vector<double> estimates;   // signed for weak studies, >= 0 for strong
    std::vector<double> std_errors;
    long sample_count = 0;
    std::string coupling;  // reference resolution and seed descriptor

    RateFit fit() const { return fit_rate(h, estimates, std_errors); }
};

class StudyError : public std::runtime_error {
  public:
    StudyError(const std::string& what, double level, long path)
        : std::runtime_error("level " + std::to_string(level) + ", path " +
                             std::to_string(path) + ": " + what),
          level_value(level),
          path_index(path) {}
    double level_value;
    long path_index;
};

// ---------------------------------------------------------------------------
// Deterministic parallel driver

inline int worker_count() {
    if (const char* env = std::getenv("SCH_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(0..n-1) across workers.  Results must go to pre-indexed slots;
// the first exception (by lowest index) is rethrown after all workers
// finish, so failure reporting is deterministic too.
template <typename Fn>
void parallel_for(long n, Fn&& fn, int workers = worker_count()) {
    if (n <= 0) return;
    workers = std::min<long>(workers, n);
    if (workers <= 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<long> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const long i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    errors[static_cast<std::size_t>(i)] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Coupled studies

struct StudyOutcome {
    std::optional<ErrorReport> weak;
    ErrorReport strong;
};

namespace detail {

struct LevelSlots {
    // slots[level][path]
    std::vector<std::vector<double>> weak_diff;
    std::vector<std::vector<double>> strong_sq;
};

inline ErrorReport reduce_weak(const LevelSlots& slots, std::vector<double> grid,
                               std::vector<double> h, long k, std::string study,
                               std::string coupling) {
    ErrorReport rep;
    rep.study = std::move(study);
    rep.grid = std::move(grid);
    rep.h = std::move(h);
    rep.sample_count = k;
    rep.coupling = std::move(coupling);
    for (const auto& col : slots.weak_diff) {
        rep.estimates.push_back(pairwise_mean(col));
        rep.std_errors.push_back(standard_error(col));
    }
    return rep;
}

inline ErrorReport reduce_strong(const LevelSlots& slots, std::vector<double> grid,
                                 std::vector<double> h, long k, std::string study,
                                 std::string coupling) {
    ErrorReport rep;
    rep.study = std::move(study);
    rep.grid = std::move(grid);
    rep.h = std::move(h);
    rep.sample_count = k;
    rep.coupling = std::move(coupling);
    for (const auto& col : slots.strong_sq) {
        const double msq = pairwise_mean(col);
        const double se_msq = standard_error(col);
        const double est = std::sqrt(std::max(msq, 0.0));
        rep.estimates.push_back(est);
        // delta method for sqrt; zero when the level coincides with the
        // reference and every difference vanishes identically
        rep.std_errors.push_back(est > 0.0 ? se_msq / (2.0 * est) : 0.0);
    }
    return rep;
}

// Pathwise squared L2 gap, reference modes beyond the level count included.
inline double coupled_gap_sq(const SpectralField& ref, const SpectralField& coarse) {
    double acc = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double c = i < coarse.size() ? coarse.coeffs[i] : 0.0;
        const double d = ref.coeffs[i] - c;
        acc += d * d;
    }
    return acc;
}

}  // namespace detail

// Temporal study: reference at M_ref steps, levels at the entries of
// m_list, all at fixed mode count n and driven by the same per-path table.
inline StudyOutcome run_coupled_temporal(const ModelConfig& cfg, const std::vector<int>& m_list,
                                         int m_ref, int n, long k_paths,
                                         const TestFunctional* phi, std::uint64_t seed,
                                         std::string_view study_label) {
    if (m_list.empty()) throw std::invalid_argument("temporal study: empty level list");
    for (int m : m_list)
        if (m < 1 || m_ref % m != 0)
            throw std::invalid_argument("temporal study: every level must divide M_ref (" +
                                        std::to_string(m_ref) + " mod " + std::to_string(m) +
                                        " != 0)");
    if (k_paths < 1) throw std::invalid_argument("temporal study: need at least one path");

    const auto levels = static_cast<std::size_t>(m_list.size());
    detail::LevelSlots slots;
    slots.weak_diff.assign(phi ? levels : 0, std::vector<double>(k_paths, 0.0));
    slots.strong_sq.assign(levels, std::vector<double>(k_paths, 0.0));

    const QSpectrum q = cfg.q_spectrum(n);
    parallel_for(k_paths, [&](long path) {
        const std::uint64_t path_seed = rng::derive_seed(seed, study_label, static_cast<std::uint64_t>(path));
        const NoiseTable table = build_noise_table(path_seed, cfg.horizon, m_ref, n, q);

        ModelConfig ref_cfg = cfg;
        ref_cfg.n_modes = n;
        ref_cfg.m_steps = m_ref;
        SpectralField x_ref;
        try {
            x_ref = simulate_path(ref_cfg, coarsen(table, m_ref, n)).state;
        } catch (const std::exception& e) {
            throw StudyError(std::string("reference path failed: ") + e.what(), m_ref, path);
        }
        const double phi_ref = phi ? phi->evaluate(x_ref) : 0.0;

        for (std::size_t li = 0; li < levels; ++li) {
            SpectralField x_level;
            if (m_list[li] == m_ref) {
                x_level = x_ref;  // the same realization by construction
            } else {
                ModelConfig level_cfg = cfg;
                level_cfg.n_modes = n;
                level_cfg.m_steps = m_list[li];
                try {
                    x_level = simulate_path(level_cfg, coarsen(table, m_list[li], n)).state;
                } catch (const std::exception& e) {
                    throw StudyError(std::string("level path failed: ") + e.what(), m_list[li],
                                     path);
                }
            }
            if (phi) slots.weak_diff[li][path] = phi_ref - phi->evaluate(x_level);
            slots.strong_sq[li][path] = detail::coupled_gap_sq(x_ref, x_level);
        }
    });

    std::vector<double> grid, h;
    for (int m : m_list) {
        grid.push_back(static_cast<double>(m));
        h.push_back(cfg.horizon / static_cast<double>(m));
    }
    std::ostringstream coupling;
    coupling << "M_ref=" << m_ref << " N=" << n << " seed=" << seed;

    StudyOutcome out;
    if (phi)
        out.weak = detail::reduce_weak(slots, grid, h, k_paths, std::string(study_label),
                                       coupling.str());
    out.strong = detail::reduce_strong(slots, grid, h, k_paths, std::string(study_label),
                                       coupling.str());
    return out;
}

// Spatial study: reference at N_ref modes, levels at the entries of
// n_list, all integrated with the same M steps on the same noise.
inline StudyOutcome run_coupled_spatial(const ModelConfig& cfg, const std::vector<int>& n_list,
                                        int n_ref, int m_steps, long k_paths,
                                        const TestFunctional* phi, std::uint64_t seed,
                                        std::string_view study_label) {
    if (n_list.empty()) throw std::invalid_argument("spatial study: empty level list");
    for (int n : n_list)
        if (n < 1 || n > n_ref)
            throw std::invalid_argument("spatial study: levels must satisfy 1 <= N <= N_ref");
    if (k_paths < 1) throw std::invalid_argument("spatial study: need at least one path");

    const auto levels = static_cast<std::size_t>(n_list.size());
    detail::LevelSlots slots;
    slots.weak_diff.assign(phi ? levels : 0, std::vector<double>(k_paths, 0.0));
    slots.strong_sq.assign(levels, std::vector<double>(k_paths, 0.0));

    const QSpectrum q = cfg.q_spectrum(n_ref);
    parallel_for(k_paths, [&](long path) {
        const std::uint64_t path_seed = rng::derive_seed(seed, study_label, static_cast<std::uint64_t>(path));
        const NoiseTable table = build_noise_table(path_seed, cfg.horizon, m_steps, n_ref, q);

        ModelConfig ref_cfg = cfg;
        ref_cfg.n_modes = n_ref;
        ref_cfg.m_steps = m_steps;
        SpectralField x_ref;
        try {
            x_ref = simulate_path(ref_cfg, coarsen(table, m_steps, n_ref)).state;
        } catch (const std::exception& e) {
            throw StudyError(std::string("reference path failed: ") + e.what(), n_ref, path);
        }
        const double phi_ref = phi ? phi->evaluate(x_ref) : 0.0;

        for (std::size_t li = 0; li < levels; ++li) {
            SpectralField x_level;
            if (n_list[li] == n_ref) {
                x_level = x_ref;
            } else {
                ModelConfig level_cfg = cfg;
                level_cfg.n_modes = n_list[li];
                level_cfg.m_steps = m_steps;
                try {
                    x_level = simulate_path(level_cfg, coarsen(table, m_steps, n_list[li])).state;
                } catch (const std::exception& e) {
                    throw StudyError(std::string("level path failed: ") + e.what(), n_list[li],
                                     path);
                }
            }
            if (phi) slots.weak_diff[li][path] = phi_ref - phi->evaluate(x_level);
            slots.strong_sq[li][path] = detail::coupled_gap_sq(x_ref, x_level);
        }
    });

    std::vector<double> grid, h;
    for (int n : n_list) {
        grid.push_back(static_cast<double>(n));
        h.push_back(1.0 / static_cast<double>(n));
    }
    std::ostringstream coupling;
    coupling << "N_ref=" << n_ref << " M=" << m_steps << " seed=" << seed;

    StudyOutcome out;
    if (phi)
        out.weak = detail::reduce_weak(slots, grid, h, k_paths, std::string(study_label),
                                       coupling.str());
    out.strong = detail::reduce_strong(slots, grid, h, k_paths, std::string(study_label),
                                       coupling.str());
    return out;
}

// ---------------------------------------------------------------------------
// Public estimators (one per study)

inline ErrorReport estimate_weak_error_temporal(const ModelConfig& cfg,
                                                const std::vector<int>& m_list, int m_ref, int n,
                                                long k_paths, const TestFunctional& phi,
                                                std::uint64_t seed) {
    return *run_coupled_temporal(cfg, m_list, m_ref, n, k_paths, &phi, seed, "temporal_weak")
                .weak;
}

inline ErrorReport estimate_strong_error_temporal(const ModelConfig& cfg,
                                                  const std::vector<int>& m_list, int m_ref,
                                                  int n, long k_paths, std::uint64_t seed) {
    return run_coupled_temporal(cfg, m_list, m_ref, n, k_paths, nullptr, seed, "temporal_strong")
        .strong;
}

inline ErrorReport estimate_strong_error_spatial(const ModelConfig& cfg,
                                                 const std::vector<int>& n_list, int n_ref,
                                                 int m_steps, long k_paths, std::uint64_t seed) {
    return run_coupled_spatial(cfg, n_list, n_ref, m_steps, k_paths, nullptr, seed,
                               "spatial_strong")
        .strong;
}

// Weak spatial estimates come with their strong counterparts from the same
// paths: the per-point mean-value bound and the noise-floor fallback both
// need them.
inline StudyOutcome estimate_weak_error_spatial(const ModelConfig& cfg,
                                                const std::vector<int>& n_list, int n_ref,
                                                int m_steps, long k_paths,
                                                const TestFunctional& phi, std::uint64_t seed) {
    return run_coupled_spatial(cfg, n_list, n_ref, m_steps, k_paths, &phi, seed, "spatial_weak");
}

// Monte Carlo strong error of linear-mode backward Euler against the
// distributionally exact linear solution, next to the closed-form
// expectation it must reproduce.  Comparisons belong in the squared
// domain, where the estimator is a plain sample mean.
struct LinearOracleOutcome {
    ErrorReport report;              // estimates = sqrt(mean squared gap)
    std::vector<double> mean_sq;     // per level
    std::vector<double> se_mean_sq;  // standard error of the above
    std::vector<double> oracle_sq;   // closed-form expectation of the squared gap
};

inline LinearOracleOutcome run_linear_oracle(const ModelConfig& cfg,
                                             const std::vector<int>& m_list, int m_ref, int n,
                                             long k_paths, std::uint64_t seed) {
    if (m_list.empty()) throw std::invalid_argument("linear oracle: empty level list");
    for (int m : m_list)
        if (m < 1 || m_ref % m != 0)
            throw std::invalid_argument("linear oracle: every level must divide M_ref");
    ModelConfig lin = cfg;
    lin.linear_mode = true;
    lin.n_modes = n;

    const auto levels = static_cast<std::size_t>(m_list.size());
    std::vector<std::vector<double>> gap_sq(levels, std::vector<double>(k_paths, 0.0));
    const QSpectrum q = lin.q_spectrum(n);
    parallel_for(k_paths, [&](long path) {
        const std::uint64_t path_seed =
            rng::derive_seed(seed, "linear_oracle", static_cast<std::uint64_t>(path));
        const NoiseTable table = build_noise_table(path_seed, lin.horizon, m_ref, n, q);
        const SpectralField exact = simulate_linear_exact(lin, table);
        for (std::size_t li = 0; li < levels; ++li) {
            ModelConfig level_cfg = lin;
            level_cfg.m_steps = m_list[li];
            const SpectralField be = simulate_path(level_cfg, coarsen(table, m_list[li], n)).state;
            gap_sq[li][path] = detail::coupled_gap_sq(exact, be);
        }
    });

    LinearOracleOutcome out;
    out.report.study = "linear_oracle";
    out.report.sample_count = k_paths;
    std::ostringstream coupling;
    coupling << "M_ref=" << m_ref << " N=" << n << " seed=" << seed << " exact-linear-reference";
    out.report.coupling = coupling.str();
    for (std::size_t li = 0; li < levels; ++li) {
        out.report.grid.push_back(static_cast<double>(m_list[li]));
        out.report.h.push_back(lin.horizon / static_cast<double>(m_list[li]));
        const double msq = pairwise_mean(gap_sq[li]);
        const double se = standard_error(gap_sq[li]);
        out.mean_sq.push_back(msq);
        out.se_mean_sq.push_back(se);
        ModelConfig level_cfg = lin;
        level_cfg.m_steps = m_list[li];
        out.oracle_sq.push_back(linear_strong_error_sq_oracle(level_cfg, m_list[li]));
        const double est = std::sqrt(std::max(msq, 0.0));
        out.report.estimates.push_back(est);
        out.report.std_errors.push_back(est > 0.0 ? se / (2.0 * est) : 0.0);
    }
    return out;
}

// Ratio tau^{3/4} / (lambda_max^{-3/2} / 4): the triangle-inequality slack
// of reading a coupled spatial study as an absolute error against the
// exact solution.  Values above 1 mean the absolute reading is not
// supported at this M; the coupled difference itself shares the time grid
// between reference and levels, so the first-order temporal error cancels
// and the study remains valid as a self-convergence measurement.
inline double spatial_reference_dominance_gap(double horizon, int m_steps,
                                              const std::vector<int>& n_list) {
    int n_max = 1;
    for (int n : n_list) n_max = std::max(n_max, n);
    const double tau = horizon / static_cast<double>(m_steps);
    const double lam = mode_eigenvalue(static_cast<std::size_t>(n_max - 1));
    return std::pow(tau, 0.75) / (0.25 * std::pow(lam, -1.5));
}

}  // namespace sch
