#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace pscore {

// Seeded random stream. std::mt19937_64 output is pinned by the standard and
// the variate transforms below are hand-rolled, so a given seed produces the
// same values on every platform (the std::*_distribution classes do not
// guarantee that).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe as a log() argument.
    double uniform_pos() { return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, bound) via rejection.
    std::uint64_t uniform_int(std::uint64_t bound) {
        const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % bound;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % bound;
    }

    // Standard normal via Box-Muller (two uniforms per draw, no cached state).
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

private:
    std::mt19937_64 gen_;
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_bytes(std::uint64_t h, std::string_view s) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL; // FNV-1a step
    }
    return splitmix64(h);
}
} // namespace detail

// Derives an independent child seed from a master seed and a handful of string
// tags (feature id, cell key, stream name). Used so that per-cell work is
// seeded by identity rather than by position, keeping parallel schedules and
// record permutations from changing any result.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view a,
                                 std::string_view b = {}, std::string_view c = {}) {
    std::uint64_t h = detail::splitmix64(master ^ 0x243f6a8885a308d3ULL);
    h = detail::mix_bytes(h, a);
    h = detail::mix_bytes(h, b);
    h = detail::mix_bytes(h, c);
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return detail::splitmix64(detail::splitmix64(master) ^ stream);
}

} // namespace pscore
