#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

// Counter-based random number generation.  Every draw is a pure function of
// (stream key, counter), so results do not depend on evaluation order or
// thread scheduling.  Stream keys are derived from a root seed by labeled
// hashing: key.child("noise").child(j) and so on.  The word function is the
// splitmix64 output function, whose statistical quality for distinct keyed
// counters is well established.

namespace sch::rng {

inline constexpr std::uint64_t golden_gamma = 0x9e3779b97f4a7c15ull;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// FNV-1a over a label, used only to fold human-readable stream names into
// key derivation.
inline constexpr std::uint64_t hash_label(std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

// An immutable stream identifier.  child(...) derives a sub-stream; draws
// from distinct keys are statistically independent.
class StreamKey {
  public:
    explicit constexpr StreamKey(std::uint64_t seed) : state_(mix64(seed + golden_gamma)) {}

    [[nodiscard]] constexpr StreamKey child(std::string_view label) const {
        return StreamKey(state_ ^ hash_label(label));
    }
    [[nodiscard]] constexpr StreamKey child(std::uint64_t index) const {
        return StreamKey(state_ ^ mix64(index + golden_gamma));
    }

    [[nodiscard]] constexpr std::uint64_t word(std::uint64_t counter) const {
        return mix64(state_ + (counter + 1) * golden_gamma);
    }

    [[nodiscard]] constexpr std::uint64_t value() const { return state_; }

  private:
    constexpr StreamKey() : state_(0) {}
    std::uint64_t state_;
};

// Derive a sub-seed for (label, index) from a master seed.  Used by the
// experiment drivers so that adding levels or studies never shifts the
// draws of existing ones.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                                           std::uint64_t index) {
    return StreamKey(master).child(label).child(index).value();
}

// Uniform in (0, 1); never returns an endpoint.
inline double to_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal draw number `counter` from the given stream, via
// Box-Muller on two counter words.
inline double standard_normal(const StreamKey& key, std::uint64_t counter) {
    const double u1 = to_unit(key.word(2 * counter));
    const double u2 = to_unit(key.word(2 * counter + 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace sch::rng
