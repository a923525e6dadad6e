#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "sch/spectral.hpp"

// Nemytskii operator F(v)(x) = v(x)^3 - v(x), its derivative action
// F'(v) y = (3 v^2 - 1) y, and the composed drift A P_N F used by the
// implicit scheme.  Evaluation is by collocation: synthesize on a grid,
// apply f pointwise, project back.  The projection back integrates
// products of four modes (v^3 against a test mode), frequencies up to 4N,
// so the evaluation grid here has 2N + 2 points: strictly more than the
// 2N the cubic alone would need, which makes the quadrature exact rather
// than merely accurate.

namespace sch {

class NemytskiiEval {
  public:
    explicit NemytskiiEval(const Basis& basis) : basis_(&basis) {
        const int n = basis.n_modes();
        grid_ = std::max(basis.grid_size(), 2 * n + 2);
        nodes_.resize(grid_);
        eval_.resize(static_cast<std::size_t>(grid_) * n);
        quad_.resize(static_cast<std::size_t>(n) * grid_);
        for (int k = 0; k < grid_; ++k) {
            nodes_[k] = (static_cast<double>(k) + 0.5) / static_cast<double>(grid_);
            for (int i = 0; i < n; ++i) {
                const double v =
                    std::numbers::sqrt2 * std::cos((i + 1) * std::numbers::pi * nodes_[k]);
                eval_[static_cast<std::size_t>(k) * n + i] = v;
                quad_[static_cast<std::size_t>(i) * grid_ + k] = v / static_cast<double>(grid_);
            }
        }
        scratch_a_.resize(grid_);
        scratch_b_.resize(grid_);
    }

    const Basis& basis() const { return *basis_; }
    int grid_size() const { return grid_; }

    // Spectral coefficients of P_N P (v^3 - v).
    SpectralField apply_f(const SpectralField& v) {
        check_input(v);
        synthesize(v, scratch_a_);
        for (int k = 0; k < grid_; ++k) {
            const double u = scratch_a_[k];
            scratch_a_[k] = u * u * u - u;
        }
        return analyze(scratch_a_);
    }

    // Spectral coefficients of P_N P ((3 v^2 - 1) y).
    SpectralField apply_f_prime(const SpectralField& v, const SpectralField& y) {
        check_input(v);
        check_input(y);
        synthesize(v, scratch_a_);
        synthesize(y, scratch_b_);
        for (int k = 0; k < grid_; ++k) {
            const double u = scratch_a_[k];
            scratch_a_[k] = (3.0 * u * u - 1.0) * scratch_b_[k];
        }
        return analyze(scratch_a_);
    }

    // A P_N F(v): the drift term of the scheme.
    SpectralField apply_drift(const SpectralField& v) {
        SpectralField f = apply_f(v);
        for (std::size_t i = 0; i < f.size(); ++i) f.coeffs[i] *= basis_->lambda(i);
        return f;
    }

    // Dense spectral matrix B of multiplication by f'(v) = 3 v^2 - 1:
    // B[i][l] = <e_{i+1}, f'(v) e_{l+1}>, used to assemble Newton
    // Jacobians.  Row-major N x N.
    std::vector<double> multiplier_matrix(const SpectralField& v) {
        check_input(v);
        const int n = basis_->n_modes();
        synthesize(v, scratch_a_);
        for (int k = 0; k < grid_; ++k) {
            const double u = scratch_a_[k];
            scratch_a_[k] = 3.0 * u * u - 1.0;
        }
        std::vector<double> b(static_cast<std::size_t>(n) * n, 0.0);
        for (int i = 0; i < n; ++i) {
            const double* qrow = &quad_[static_cast<std::size_t>(i) * grid_];
            for (int k = 0; k < grid_; ++k) {
                const double w = qrow[k] * scratch_a_[k];
                const double* erow = &eval_[static_cast<std::size_t>(k) * n];
                double* brow = &b[static_cast<std::size_t>(i) * n];
                for (int l = 0; l < n; ++l) brow[l] += w * erow[l];
            }
        }
        return b;
    }

    // Sup-norm of v on the evaluation grid (the ||.||_V proxy used by the
    // diagnostics and the Lipschitz tests).
    double sup_norm(const SpectralField& v) {
        check_input(v);
        synthesize(v, scratch_a_);
        double m = 0.0;
        for (int k = 0; k < grid_; ++k) m = std::max(m, std::abs(scratch_a_[k]));
        return m;
    }

  private:
    void check_input(const SpectralField& v) const {
        if (v.size() > static_cast<std::size_t>(basis_->n_modes()))
            throw std::invalid_argument("NemytskiiEval: field has more modes than basis");
        if (!all_finite(v)) throw std::invalid_argument("NemytskiiEval: non-finite input field");
    }

    void synthesize(const SpectralField& f, std::vector<double>& out) const {
        const int n = basis_->n_modes();
        const auto m = static_cast<std::size_t>(f.size());
        for (int k = 0; k < grid_; ++k) {
            const double* row = &eval_[static_cast<std::size_t>(k) * n];
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += row[i] * f.coeffs[i];
            out[k] = acc;
        }
    }

    SpectralField analyze(const std::vector<double>& p) const {
        const int n = basis_->n_modes();
        SpectralField out(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const double* row = &quad_[static_cast<std::size_t>(i) * grid_];
            double acc = 0.0;
            for (int k = 0; k < grid_; ++k) acc += row[k] * p[k];
            out.coeffs[i] = acc;
        }
        return out;
    }

    const Basis* basis_;
    int grid_ = 0;
    std::vector<double> nodes_;
    std::vector<double> eval_;  // grid x modes
    std::vector<double> quad_;  // modes x grid, weights folded in
    std::vector<double> scratch_a_;
    std::vector<double> scratch_b_;
};

}  // namespace sch
