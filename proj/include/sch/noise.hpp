#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sch/rng.hpp"
#include "sch/spectral.hpp"

// Q-Wiener increments, generated once at the finest (M_ref, N_ref)
// resolution and coarsened in time and truncated in space without
// re-sampling.  Coupling coarse and fine runs through one table is what
// makes the convergence studies common-random-number experiments.

namespace sch {

// Per-mode noise variances q_j, diagonal in the A-eigenbasis.
struct QSpectrum {
    enum class Family { power_law, trace_class, custom };

    Family family = Family::power_law;
    double param = 2.0;
    std::vector<double> q;  // q_j for modes j = 1..size

    std::size_t size() const { return q.size(); }

    // q_j = lambda_j^{-r}
    static QSpectrum power_law(double r, int n_modes) {
        QSpectrum s;
        s.family = Family::power_law;
        s.param = r;
        s.q.resize(n_modes);
        for (int i = 0; i < n_modes; ++i) s.q[i] = std::pow(mode_eigenvalue(i), -r);
        return s;
    }

    // q_j = j^{-s}
    static QSpectrum trace_class(double sp, int n_modes) {
        QSpectrum s;
        s.family = Family::trace_class;
        s.param = sp;
        s.q.resize(n_modes);
        for (int i = 0; i < n_modes; ++i) s.q[i] = std::pow(static_cast<double>(i + 1), -sp);
        return s;
    }

    static QSpectrum custom(std::vector<double> values) {
        QSpectrum s;
        s.family = Family::custom;
        s.param = 0.0;
        s.q = std::move(values);
        return s;
    }

    // The admissibility condition is that A^{1/2} Q^{1/2} is
    // Hilbert-Schmidt, i.e. sum_j lambda_j q_j < infinity.  Any finite
    // vector satisfies it formally; what matters is the family tail:
    // power law needs r > 3/2, the trace-class family needs s > 3.
    bool admissible(std::string* why = nullptr) const {
        for (std::size_t i = 0; i < q.size(); ++i) {
            if (!(q[i] >= 0.0) || !std::isfinite(q[i])) {
                if (why) *why = "noise admissibility: q_" + std::to_string(i + 1) +
                                " is negative or non-finite";
                return false;
            }
        }
        if (family == Family::power_law && !(param > 1.5)) {
            if (why) {
                std::ostringstream os;
                os << "noise admissibility: power-law exponent " << param
                   << " <= 3/2, so A^(1/2)Q^(1/2) is not Hilbert-Schmidt";
                *why = os.str();
            }
            return false;
        }
        if (family == Family::trace_class && !(param > 3.0)) {
            if (why) {
                std::ostringstream os;
                os << "noise admissibility: trace-class exponent " << param
                   << " <= 3, so A^(1/2)Q^(1/2) is not Hilbert-Schmidt";
                *why = os.str();
            }
            return false;
        }
        double weighted = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) weighted += mode_eigenvalue(i) * q[i];
        if (!std::isfinite(weighted)) {
            if (why) *why = "noise admissibility: sum lambda_j q_j is non-finite";
            return false;
        }
        return true;
    }

    void validate() const {
        std::string why;
        if (!admissible(&why)) throw std::invalid_argument(why);
    }
};

// Scaled Wiener increments on a coarse grid: dw(m, j) has variance
// q_j * tau, m = 0..steps-1, j zero-based as everywhere.
struct IncrementSequence {
    int steps = 0;
    int modes = 0;
    double tau = 0.0;
    std::vector<double> dw;  // steps x modes, row-major by step

    double at(int m, int j) const { return dw[static_cast<std::size_t>(m) * modes + j]; }

    SpectralField step_field(int m) const {
        SpectralField f(static_cast<std::size_t>(modes));
        const double* row = &dw[static_cast<std::size_t>(m) * modes];
        for (int j = 0; j < modes; ++j) f.coeffs[j] = row[j];
        return f;
    }
};

inline constexpr int noise_table_max_steps = 4096;
inline constexpr int noise_table_max_modes = 256;

// Standard-normal draw table at the finest resolution.  Mode j draws come
// from the sub-stream keyed by (seed, j), so truncating the mode count
// never changes the draws of the surviving modes, and the table is
// bit-reproducible from (seed, T, M_ref, N_ref).
class NoiseTable {
  public:
    NoiseTable(std::uint64_t seed, double horizon, int m_ref, int n_ref, QSpectrum q)
        : seed_(seed), horizon_(horizon), m_ref_(m_ref), n_ref_(n_ref), q_(std::move(q)) {
        if (m_ref < 1 || n_ref < 1)
            throw std::invalid_argument("NoiseTable: M_ref and N_ref must be >= 1");
        if (m_ref > noise_table_max_steps)
            throw std::invalid_argument("NoiseTable: M_ref exceeds ceiling " +
                                        std::to_string(noise_table_max_steps));
        if (n_ref > noise_table_max_modes)
            throw std::invalid_argument("NoiseTable: N_ref exceeds ceiling " +
                                        std::to_string(noise_table_max_modes));
        if (!(horizon > 0.0)) throw std::invalid_argument("NoiseTable: horizon must be > 0");
        if (static_cast<int>(q_.size()) < n_ref)
            throw std::invalid_argument("NoiseTable: Q spectrum shorter than N_ref");
        q_.validate();
        tau_ref_ = horizon_ / static_cast<double>(m_ref_);
        z_.resize(static_cast<std::size_t>(m_ref_) * n_ref_);
        const rng::StreamKey root(seed_);
        for (int j = 0; j < n_ref_; ++j) {
            const rng::StreamKey stream = root.child("noise-mode").child(static_cast<std::uint64_t>(j));
            for (int i = 0; i < m_ref_; ++i)
                z_[static_cast<std::size_t>(i) * n_ref_ + j] =
                    rng::standard_normal(stream, static_cast<std::uint64_t>(i));
        }
    }

    std::uint64_t seed() const { return seed_; }
    double horizon() const { return horizon_; }
    int fine_steps() const { return m_ref_; }
    int fine_modes() const { return n_ref_; }
    double tau_ref() const { return tau_ref_; }
    const QSpectrum& q_spectrum() const { return q_; }
    const std::vector<double>& draws() const { return z_; }

    // Scaled fine increment: sqrt(q_j tau_ref) z_{ij}.
    double fine_increment(int i, int j) const {
        return std::sqrt(q_.q[j] * tau_ref_) * z_[static_cast<std::size_t>(i) * n_ref_ + j];
    }

    void dump(std::ostream& os) const;
    static NoiseTable load(std::istream& is);

  private:
    NoiseTable() = default;

    std::uint64_t seed_ = 0;
    double horizon_ = 0.0;
    int m_ref_ = 0;
    int n_ref_ = 0;
    double tau_ref_ = 0.0;
    QSpectrum q_;
    std::vector<double> z_;
};

inline NoiseTable build_noise_table(std::uint64_t seed, double horizon, int m_ref, int n_ref,
                                    const QSpectrum& q) {
    return NoiseTable(seed, horizon, m_ref, n_ref, q);
}

namespace detail {

// Balanced-tree sum of scaled fine increments over [i0, i1).  The split is
// always at the midpoint, so dyadic block sums nest: summing two adjacent
// half-blocks reproduces the full block sum bit-for-bit, which gives the
// coarsening its exact telescoping property.
inline double block_sum(const NoiseTable& t, int j, double scale, int i0, int i1) {
    if (i1 - i0 == 1) return scale * t.draws()[static_cast<std::size_t>(i0) * t.fine_modes() + j];
    const int mid = i0 + (i1 - i0) / 2;
    return block_sum(t, j, scale, i0, mid) + block_sum(t, j, scale, mid, i1);
}

}  // namespace detail

// Coarse increments over `steps` intervals and the first `modes` modes.
// Each coarse increment is the exact sum of the fine increments it spans.
inline IncrementSequence coarsen(const NoiseTable& table, int steps, int modes) {
    if (steps < 1 || table.fine_steps() % steps != 0)
        throw std::invalid_argument("coarsen: step count must divide M_ref (" +
                                    std::to_string(table.fine_steps()) + " mod " +
                                    std::to_string(steps) + " != 0)");
    if (modes < 1 || modes > table.fine_modes())
        throw std::invalid_argument("coarsen: mode count must be in [1, N_ref]");
    IncrementSequence out;
    out.steps = steps;
    out.modes = modes;
    out.tau = table.horizon() / static_cast<double>(steps);
    out.dw.resize(static_cast<std::size_t>(steps) * modes);
    const int block = table.fine_steps() / steps;
    for (int j = 0; j < modes; ++j) {
        const double scale = std::sqrt(table.q_spectrum().q[j] * table.tau_ref());
        for (int m = 0; m < steps; ++m)
            out.dw[static_cast<std::size_t>(m) * modes + j] =
                detail::block_sum(table, j, scale, m * block, (m + 1) * block);
    }
    return out;
}

// Exact-in-distribution samples of the stochastic convolution
// O_t = int_0^t exp(-(t-s) A^2) dW(s) on an increasing time grid starting
// at 0.  Per mode this is an Ornstein-Uhlenbeck process with rate
// lambda_j^2 and exactly known transition law, so no time-stepping error
// is involved regardless of the grid spacing.
inline std::vector<SpectralField> sample_convolution_path(std::uint64_t seed,
                                                          const std::vector<double>& times,
                                                          const QSpectrum& q, int n_modes) {
    if (times.empty() || times.front() != 0.0)
        throw std::invalid_argument("sample_convolution_path: time grid must start at 0");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1]))
            throw std::invalid_argument("sample_convolution_path: time grid must be increasing");
    if (n_modes < 1 || static_cast<std::size_t>(n_modes) > q.size())
        throw std::invalid_argument("sample_convolution_path: mode count outside Q spectrum");
    q.validate();

    std::vector<SpectralField> path(times.size(), SpectralField(static_cast<std::size_t>(n_modes)));
    const rng::StreamKey root(seed);
    for (int j = 0; j < n_modes; ++j) {
        const rng::StreamKey stream = root.child("conv-mode").child(static_cast<std::uint64_t>(j));
        const double rate = mode_eigenvalue(j) * mode_eigenvalue(j);
        double state = 0.0;
        for (std::size_t i = 1; i < times.size(); ++i) {
            const double dt = times[i] - times[i - 1];
            const double decay = std::exp(-rate * dt);
            // transition variance q_j (1 - e^{-2 lambda^2 dt}) / (2 lambda^2)
            const double var = q.q[j] * (-std::expm1(-2.0 * rate * dt)) / (2.0 * rate);
            state = decay * state +
                    std::sqrt(var) * rng::standard_normal(stream, static_cast<std::uint64_t>(i - 1));
            path[i].coeffs[j] = state;
        }
    }
    return path;
}

// Binary table format: fixed little-endian header followed by the raw
// standard-normal payload, row-major by step.
//   magic   8 bytes "SCHNOIZ1"
//   version u32 (1)
//   family  u32 (0 power_law, 1 trace_class)
//   seed    u64
//   T       f64
//   M_ref   u64
//   N_ref   u64
//   r       f64 (family parameter)
//   payload M_ref * N_ref f64
inline void NoiseTable::dump(std::ostream& os) const {
    if (q_.family == QSpectrum::Family::custom)
        throw std::invalid_argument("NoiseTable::dump: custom Q spectra are not serializable");
    const char magic[8] = {'S', 'C', 'H', 'N', 'O', 'I', 'Z', '1'};
    os.write(magic, 8);
    auto put_u32 = [&os](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
    auto put_u64 = [&os](std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); };
    auto put_f64 = [&os](double v) { os.write(reinterpret_cast<const char*>(&v), 8); };
    put_u32(1u);
    put_u32(q_.family == QSpectrum::Family::power_law ? 0u : 1u);
    put_u64(seed_);
    put_f64(horizon_);
    put_u64(static_cast<std::uint64_t>(m_ref_));
    put_u64(static_cast<std::uint64_t>(n_ref_));
    put_f64(q_.param);
    os.write(reinterpret_cast<const char*>(z_.data()),
             static_cast<std::streamsize>(z_.size() * sizeof(double)));
    if (!os) throw std::runtime_error("NoiseTable::dump: write failed");
}

inline NoiseTable NoiseTable::load(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "SCHNOIZ1", 8) != 0)
        throw std::runtime_error("NoiseTable::load: bad magic");
    auto get_u32 = [&is]() {
        std::uint32_t v = 0;
        is.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    auto get_u64 = [&is]() {
        std::uint64_t v = 0;
        is.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    auto get_f64 = [&is]() {
        double v = 0;
        is.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    const std::uint32_t version = get_u32();
    if (version != 1u)
        throw std::runtime_error("NoiseTable::load: unsupported version " + std::to_string(version));
    const std::uint32_t family = get_u32();
    const std::uint64_t seed = get_u64();
    const double horizon = get_f64();
    const auto m_ref = static_cast<int>(get_u64());
    const auto n_ref = static_cast<int>(get_u64());
    const double param = get_f64();
    if (!is) throw std::runtime_error("NoiseTable::load: truncated header");
    if (m_ref < 1 || n_ref < 1 || m_ref > noise_table_max_steps || n_ref > noise_table_max_modes)
        throw std::runtime_error("NoiseTable::load: table dimensions out of range");
    NoiseTable table;
    table.seed_ = seed;
    table.horizon_ = horizon;
    table.m_ref_ = m_ref;
    table.n_ref_ = n_ref;
    table.tau_ref_ = horizon / static_cast<double>(m_ref);
    table.q_ = family == 0u ? QSpectrum::power_law(param, n_ref)
                            : QSpectrum::trace_class(param, n_ref);
    table.q_.validate();
    table.z_.resize(static_cast<std::size_t>(m_ref) * n_ref);
    is.read(reinterpret_cast<char*>(table.z_.data()),
            static_cast<std::streamsize>(table.z_.size() * sizeof(double)));
    if (!is) throw std::runtime_error("NoiseTable::load: truncated payload");
    return table;
}

}  // namespace sch
