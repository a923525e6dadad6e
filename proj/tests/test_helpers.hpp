#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sch/rng.hpp"
#include "sch/spectral.hpp"

namespace sch::test {

// Deterministic random spectral field with coefficients in [-amp, amp].
inline SpectralField random_field(std::uint64_t seed, int n_modes, double amp = 1.0) {
    SpectralField f(static_cast<std::size_t>(n_modes));
    const rng::StreamKey key(seed);
    for (int i = 0; i < n_modes; ++i)
        f.coeffs[i] = amp * (2.0 * rng::to_unit(key.word(static_cast<std::uint64_t>(i))) - 1.0);
    return f;
}

// Random field with decaying coefficients, a stand-in for smooth states.
inline SpectralField random_decaying_field(std::uint64_t seed, int n_modes, double amp = 1.0,
                                           double decay = 2.0) {
    SpectralField f = random_field(seed, n_modes, amp);
    for (int i = 0; i < n_modes; ++i)
        f.coeffs[i] /= std::pow(static_cast<double>(i + 1), decay);
    return f;
}

// Composite midpoint quadrature of a callable on [0, 1]; oversampled
// oracle for collocation checks.
template <typename F>
double midpoint_quadrature(F&& f, int n_points) {
    double acc = 0.0;
    for (int k = 0; k < n_points; ++k)
        acc += f((static_cast<double>(k) + 0.5) / static_cast<double>(n_points));
    return acc / static_cast<double>(n_points);
}

// Point value of a spectral field at arbitrary x.
inline double point_value(const SpectralField& f, double x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
        acc += f.coeffs[i] * std::numbers::sqrt2 *
               std::cos(static_cast<double>(i + 1) * std::numbers::pi * x);
    return acc;
}

}  // namespace sch::test
