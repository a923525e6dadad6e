#pragma once

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sch/noise.hpp"
#include "sch/spectral.hpp"

namespace sch {

// Nonlinear solver settings for the implicit step.
struct SolverConfig {
    double tol = 1e-12;            // residual tolerance in the preconditioned |.|_0 norm
    int max_fixed_point_iters = 50;
    int max_newton_iters = 20;
    double damping = 1.0;          // fixed-point relaxation factor in (0, 1]

    void validate() const {
        if (!(tol > 0.0)) throw std::invalid_argument("solver: tol must be > 0");
        if (max_fixed_point_iters < 1)
            throw std::invalid_argument("solver: max_fixed_point_iters must be >= 1");
        if (max_newton_iters < 1)
            throw std::invalid_argument("solver: max_newton_iters must be >= 1");
        if (!(damping > 0.0 && damping <= 1.0))
            throw std::invalid_argument("solver: damping must be in (0, 1]");
    }
};

enum class QFamily { power_law, trace_class };

inline const char* to_string(QFamily f) {
    return f == QFamily::power_law ? "power_law" : "trace_class";
}

// Model and discretization parameters for one solver run.
struct ModelConfig {
    double horizon = 1.0;  // T
    int n_modes = 32;      // N
    int m_steps = 256;     // M
    QFamily q_family = QFamily::power_law;
    double q_param = 2.0;
    std::map<int, double> initial_modes = {{1, 1.0}};  // mode index -> coefficient
    SolverConfig solver;
    bool linear_mode = false;  // disable the nonlinearity
    double dealias_factor = 2.0;

    QSpectrum q_spectrum(int n) const {
        return q_family == QFamily::power_law ? QSpectrum::power_law(q_param, n)
                                              : QSpectrum::trace_class(q_param, n);
    }

    // P_N X_0: the declared coefficients truncated to n modes.
    SpectralField initial_state(int n) const {
        SpectralField x0(static_cast<std::size_t>(n));
        for (const auto& [mode, coeff] : initial_modes) {
            if (mode >= 1 && mode <= n) x0.coeffs[mode - 1] = coeff;
        }
        return x0;
    }

    // Throws on hard errors; returns human-readable warnings.
    std::vector<std::string> validate() const {
        std::vector<std::string> warnings;
        if (!(horizon > 0.0)) throw std::invalid_argument("model: horizon T must be > 0");
        if (n_modes < 1) throw std::invalid_argument("model: mode count N must be >= 1");
        if (m_steps < 1) throw std::invalid_argument("model: step count M must be >= 1");
        if (!(dealias_factor >= 1.0))
            throw std::invalid_argument("model: dealias factor must be >= 1");
        solver.validate();
        q_spectrum(n_modes).validate();

        double h4_sq = 0.0;
        for (const auto& [mode, coeff] : initial_modes) {
            if (mode < 1) throw std::invalid_argument("model: initial datum mode indices start at 1");
            if (!std::isfinite(coeff))
                throw std::invalid_argument("model: non-finite initial datum coefficient");
            const double lam = mode_eigenvalue(static_cast<std::size_t>(mode - 1));
            h4_sq += lam * lam * lam * lam * coeff * coeff;
        }
        if (!std::isfinite(h4_sq))
            throw std::invalid_argument("model: initial datum has infinite |.|_4 norm");

        // Warn when the declared coefficients decay slower than lambda^-2;
        // such data would not stay |.|_4-bounded if the tail continued.
        std::vector<std::pair<double, double>> pts;  // (log lambda, log |c|)
        for (const auto& [mode, coeff] : initial_modes) {
            if (coeff != 0.0)
                pts.emplace_back(std::log(mode_eigenvalue(static_cast<std::size_t>(mode - 1))),
                                 std::log(std::abs(coeff)));
        }
        if (pts.size() >= 3) {
            double sx = 0, sy = 0, sxx = 0, sxy = 0;
            for (auto& [x, y] : pts) {
                sx += x;
                sy += y;
                sxx += x * x;
                sxy += x * y;
            }
            const double n = static_cast<double>(pts.size());
            const double denom = n * sxx - sx * sx;
            if (denom > 0) {
                const double slope = (n * sxy - sx * sy) / denom;
                if (slope > -2.0 + 1e-9) {
                    std::ostringstream os;
                    os << "model: initial datum coefficients decay like lambda^" << slope
                       << ", slower than lambda^-2";
                    warnings.push_back(os.str());
                }
            }
        }
        return warnings;
    }
};

}  // namespace sch
