#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

// Eigenbasis of the Neumann Laplacian A on the unit interval, restricted to
// mean-zero functions: e_j(x) = sqrt(2) cos(j pi x) with eigenvalue
// lambda_j = (j pi)^2, j >= 1.  All linear operators used by the solver
// (fractional powers of A, the semigroup exp(-t A^2) and its backward Euler
// counterpart (I + tau A^2)^{-m}) are diagonal in this basis, so a field is
// just its coefficient vector and the operators are per-mode scalings.
//
// Coefficient storage is zero-based: coeffs[i] belongs to mode j = i + 1.

namespace sch {

// Mean-zero function represented by coefficients against e_1..e_N.  The
// zeroth (constant) mode is structurally absent.
struct SpectralField {
    std::vector<double> coeffs;

    SpectralField() = default;
    explicit SpectralField(std::size_t n_modes) : coeffs(n_modes, 0.0) {}
    explicit SpectralField(std::vector<double> c) : coeffs(std::move(c)) {}

    std::size_t size() const { return coeffs.size(); }
    double& operator[](std::size_t i) { return coeffs[i]; }
    double operator[](std::size_t i) const { return coeffs[i]; }
};

// Point values on a collocation grid.
struct PhysicalField {
    std::vector<double> values;

    PhysicalField() = default;
    explicit PhysicalField(std::size_t n_points) : values(n_points, 0.0) {}
    explicit PhysicalField(std::vector<double> v) : values(std::move(v)) {}

    std::size_t size() const { return values.size(); }
};

// Eigenvalue of mode j = i + 1 (zero-based i).
inline double mode_eigenvalue(std::size_t i) {
    const double jpi = static_cast<double>(i + 1) * std::numbers::pi;
    return jpi * jpi;
}

inline bool all_finite(const SpectralField& f) {
    for (double c : f.coeffs)
        if (!std::isfinite(c)) return false;
    return true;
}

inline bool all_finite(const PhysicalField& f) {
    for (double v : f.values)
        if (!std::isfinite(v)) return false;
    return true;
}

// Collocation machinery for a fixed mode count.  Nodes are the midpoint
// points x_k = (k + 1/2)/G, the natural quadrature for this cosine family:
// the rule integrates cos(m pi x) exactly for all m < 2G, so a grid of G
// points resolves products of modes up to G - 1 without aliasing.
class Basis {
  public:
    Basis(int n_modes, double dealias_factor)
        : n_(n_modes), dealias_factor_(dealias_factor) {
        if (n_modes < 1) throw std::invalid_argument("Basis: mode count must be >= 1");
        if (dealias_factor < 1.0)
            throw std::invalid_argument("Basis: dealias factor must be >= 1");
        grid_ = static_cast<int>(std::ceil(dealias_factor * n_modes));
        if (grid_ < n_modes) grid_ = n_modes;
        build_tables();
    }

    int n_modes() const { return n_; }
    int grid_size() const { return grid_; }
    double dealias_factor() const { return dealias_factor_; }
    double domain_length() const { return 1.0; }

    double lambda(std::size_t i) const { return lambdas_[i]; }
    const std::vector<double>& lambdas() const { return lambdas_; }
    double node(std::size_t k) const { return nodes_[k]; }
    const std::vector<double>& nodes() const { return nodes_; }

    // e_{i+1}(x_k)
    double eval(std::size_t k, std::size_t i) const { return eval_[k * n_ + i]; }

    // values[k] = sum_i coeffs[i] e_{i+1}(x_k); accepts fields with fewer
    // modes than the basis (implicitly zero-padded).
    PhysicalField synthesize(const SpectralField& f) const {
        if (f.size() > static_cast<std::size_t>(n_))
            throw std::invalid_argument("Basis::synthesize: field has more modes than basis");
        PhysicalField out(static_cast<std::size_t>(grid_));
        const std::size_t m = f.size();
        for (std::size_t k = 0; k < static_cast<std::size_t>(grid_); ++k) {
            const double* row = &eval_[k * n_];
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += row[i] * f.coeffs[i];
            out.values[k] = acc;
        }
        return out;
    }

    // coeffs[i] = quadrature of values * e_{i+1}; the mean (mode 0) and all
    // modes above N are discarded, which realizes the projections P and P_N.
    SpectralField analyze(const PhysicalField& p) const {
        if (p.size() != static_cast<std::size_t>(grid_))
            throw std::invalid_argument("Basis::analyze: grid size mismatch");
        SpectralField out(static_cast<std::size_t>(n_));
        for (std::size_t i = 0; i < static_cast<std::size_t>(n_); ++i) {
            const double* row = &quad_[i * grid_];
            double acc = 0.0;
            for (std::size_t k = 0; k < static_cast<std::size_t>(grid_); ++k)
                acc += row[k] * p.values[k];
            out.coeffs[i] = acc;
        }
        return out;
    }

    // Quadrature mean of a physical field (the component P discards).
    double grid_mean(const PhysicalField& p) const {
        if (p.size() != static_cast<std::size_t>(grid_))
            throw std::invalid_argument("Basis::grid_mean: grid size mismatch");
        double acc = 0.0;
        for (double v : p.values) acc += v;
        return acc / static_cast<double>(grid_);
    }

  private:
    void build_tables() {
        lambdas_.resize(n_);
        for (int i = 0; i < n_; ++i) lambdas_[i] = mode_eigenvalue(static_cast<std::size_t>(i));
        nodes_.resize(grid_);
        for (int k = 0; k < grid_; ++k)
            nodes_[k] = (static_cast<double>(k) + 0.5) / static_cast<double>(grid_);
        const double sqrt2 = std::numbers::sqrt2;
        eval_.resize(static_cast<std::size_t>(grid_) * n_);
        quad_.resize(static_cast<std::size_t>(n_) * grid_);
        for (int k = 0; k < grid_; ++k) {
            for (int i = 0; i < n_; ++i) {
                const double v = sqrt2 * std::cos((i + 1) * std::numbers::pi * nodes_[k]);
                eval_[static_cast<std::size_t>(k) * n_ + i] = v;
                quad_[static_cast<std::size_t>(i) * grid_ + k] = v / static_cast<double>(grid_);
            }
        }
    }

    int n_;
    double dealias_factor_;
    int grid_ = 0;
    std::vector<double> lambdas_;
    std::vector<double> nodes_;
    std::vector<double> eval_;  // grid x modes, e_{i+1}(x_k)
    std::vector<double> quad_;  // modes x grid, e_{i+1}(x_k) / G
};

inline Basis build_basis(int n_modes, double dealias_factor = 2.0) {
    return Basis(n_modes, dealias_factor);
}

inline PhysicalField to_physical(const SpectralField& f, const Basis& basis) {
    return basis.synthesize(f);
}

inline SpectralField to_spectral(const PhysicalField& p, const Basis& basis) {
    return basis.analyze(p);
}

// A^alpha: per-mode scaling by lambda_j^alpha.  Negative powers are fine on
// the mean-zero space since lambda_1 > 0.
inline SpectralField apply_fractional_power(const SpectralField& f, double alpha) {
    if (!std::isfinite(alpha))
        throw std::invalid_argument("apply_fractional_power: alpha must be finite");
    if (!all_finite(f))
        throw std::invalid_argument("apply_fractional_power: non-finite input field");
    SpectralField out = f;
    if (alpha == 0.0) return out;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.coeffs[i] *= std::pow(mode_eigenvalue(i), alpha);
    return out;
}

// | f |_alpha = ( sum_j lambda_j^alpha <f, e_j>^2 )^{1/2}
inline double sobolev_norm(const SpectralField& f, double alpha) {
    double acc = 0.0;
    if (alpha == 0.0) {
        for (double c : f.coeffs) acc += c * c;
    } else {
        for (std::size_t i = 0; i < f.size(); ++i)
            acc += std::pow(mode_eigenvalue(i), alpha) * f.coeffs[i] * f.coeffs[i];
    }
    return std::sqrt(acc);
}

inline double l2_norm(const SpectralField& f) { return sobolev_norm(f, 0.0); }

inline double l2_inner(const SpectralField& a, const SpectralField& b) {
    const std::size_t n = std::min(a.size(), b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a.coeffs[i] * b.coeffs[i];
    return acc;
}

// exp(-t A^2): per-mode factor exp(-t lambda_j^2).
inline SpectralField apply_semigroup(const SpectralField& f, double t) {
    if (!(t >= 0.0)) throw std::invalid_argument("apply_semigroup: t must be >= 0");
    SpectralField out = f;
    if (t == 0.0) return out;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double lam = mode_eigenvalue(i);
        out.coeffs[i] *= std::exp(-t * lam * lam);
    }
    return out;
}

// (I + tau A^2)^{-m}: per-mode factor (1 + tau lambda_j^2)^{-m}.
inline SpectralField apply_discrete_semigroup(const SpectralField& f, double tau, long steps) {
    if (!(tau > 0.0)) throw std::invalid_argument("apply_discrete_semigroup: tau must be > 0");
    if (steps < 1) throw std::invalid_argument("apply_discrete_semigroup: step count must be >= 1");
    SpectralField out = f;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double lam = mode_eigenvalue(i);
        out.coeffs[i] *= std::pow(1.0 + tau * lam * lam, static_cast<double>(-steps));
    }
    return out;
}

// Difference between the exact and the backward Euler propagator: per-mode
// factor exp(-t lambda_j^2) - (1 + tau lambda_j^2)^{-k} for t in the k-th
// step interval [(k-1) tau, k tau).
inline SpectralField apply_error_operator(const SpectralField& f, double t, double tau, long k) {
    if (!(tau > 0.0)) throw std::invalid_argument("apply_error_operator: tau must be > 0");
    if (k < 1) throw std::invalid_argument("apply_error_operator: step index must be >= 1");
    const double lo = static_cast<double>(k - 1) * tau;
    const double hi = static_cast<double>(k) * tau;
    if (!(t >= lo && t < hi))
        throw std::invalid_argument("apply_error_operator: t outside [(k-1) tau, k tau)");
    SpectralField out = f;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double lam2 = mode_eigenvalue(i) * mode_eigenvalue(i);
        const double factor =
            std::exp(-t * lam2) - std::pow(1.0 + tau * lam2, static_cast<double>(-k));
        out.coeffs[i] *= factor;
    }
    return out;
}

// Field arithmetic used throughout the solver.
inline SpectralField operator+(const SpectralField& a, const SpectralField& b) {
    const std::size_t n = std::max(a.size(), b.size());
    SpectralField out(n);
    for (std::size_t i = 0; i < a.size(); ++i) out.coeffs[i] += a.coeffs[i];
    for (std::size_t i = 0; i < b.size(); ++i) out.coeffs[i] += b.coeffs[i];
    return out;
}

inline SpectralField operator-(const SpectralField& a, const SpectralField& b) {
    const std::size_t n = std::max(a.size(), b.size());
    SpectralField out(n);
    for (std::size_t i = 0; i < a.size(); ++i) out.coeffs[i] += a.coeffs[i];
    for (std::size_t i = 0; i < b.size(); ++i) out.coeffs[i] -= b.coeffs[i];
    return out;
}

inline SpectralField operator*(double s, const SpectralField& a) {
    SpectralField out = a;
    for (double& c : out.coeffs) c *= s;
    return out;
}

}  // namespace sch
