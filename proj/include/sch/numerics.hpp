#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace sch {

// Deterministic balanced-tree summation.  The association depends only on
// the length, never on thread count or traversal order, so parallel and
// serial reductions agree bit-for-bit.  For dyadic lengths the splits land
// on block boundaries, which the noise coarsening relies on for its exact
// additivity guarantees.
inline double pairwise_sum(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n == 0) return 0.0;
    if (n == 1) return x[0];
    if (n == 2) return x[0] + x[1];
    const std::size_t half = n / 2;
    return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

inline double pairwise_mean(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("pairwise_mean: empty input");
    return pairwise_sum(x) / static_cast<double>(x.size());
}

// Unbiased sample variance, two-pass with deterministic reductions.
inline double pairwise_variance(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    const double m = pairwise_mean(x);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = (x[i] - m) * (x[i] - m);
    return pairwise_sum(sq) / static_cast<double>(n - 1);
}

// Standard error of the sample mean.
inline double standard_error(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    return std::sqrt(pairwise_variance(x) / static_cast<double>(n));
}

namespace detail {

// Dense row-major LU solve with partial pivoting, for the Newton systems
// (order <= 256).  Overwrites the matrix and right-hand side.
inline void lu_solve_in_place(std::vector<double>& a, std::vector<double>& b, std::size_t n) {
    if (a.size() != n * n || b.size() != n)
        throw std::invalid_argument("lu_solve_in_place: dimension mismatch");
    std::vector<std::size_t> piv(n);
    for (std::size_t i = 0; i < n; ++i) piv[i] = i;

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t p = col;
        double best = std::abs(a[col * n + col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double v = std::abs(a[r * n + col]);
            if (v > best) {
                best = v;
                p = r;
            }
        }
        if (best == 0.0) throw std::runtime_error("lu_solve_in_place: singular matrix");
        if (p != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a[p * n + c], a[col * n + c]);
            std::swap(b[p], b[col]);
        }
        const double inv = 1.0 / a[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] * inv;
            if (f == 0.0) continue;
            a[r * n + col] = f;
            for (std::size_t c = col + 1; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    for (std::size_t ri = n; ri-- > 0;) {
        double s = b[ri];
        for (std::size_t c = ri + 1; c < n; ++c) s -= a[ri * n + c] * b[c];
        b[ri] = s / a[ri * n + ri];
    }
}

// Two-sided 97.5% Student-t quantiles for small residual degrees of
// freedom; 1.96 beyond the table.
inline double t_quantile_975(std::size_t df) {
    static constexpr double table[] = {
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
        2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
        2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
    if (df == 0) return std::numeric_limits<double>::infinity();
    if (df <= 30) return table[df - 1];
    return 1.96;
}

}  // namespace detail
}  // namespace sch
