#pragma once

#include <cmath>
#include <cstdint>

/**
 * Counter-based random streams.
 *
 * Every draw is a pure function of (seed, stream, counters...), so any
 * period, segment or sweep cell can be sampled out of order and from any
 * number of workers with bitwise-identical results. The mixer is the
 * SplitMix64 finalizer applied over the key words.
 */
namespace floqnoise::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

/// Stream tags keep unrelated consumers of the same seed statistically
/// independent. Values are part of the reproducibility contract.
enum class Stream : std::uint64_t {
    noise_segment = 1,
    start_vector = 2,
    furstenberg_v2 = 3,
    lattice_coeff = 4,
    seed_derive = 5,
    draw_pool = 6,
    cell_seed = 7,
};

constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

/// Keyed hash of (seed, stream, a, b, c). Each word is folded through the
/// finalizer with a distinct additive constant so zero counters still
/// separate the slots.
constexpr std::uint64_t key(std::uint64_t seed, Stream stream, std::uint64_t a = 0,
                            std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = mix64(seed + kGolden);
    h = mix64(h ^ (static_cast<std::uint64_t>(stream) * kGolden + 1));
    h = mix64(h ^ (a * kGolden + 2));
    h = mix64(h ^ (b * kGolden + 3));
    h = mix64(h ^ (c * kGolden + 4));
    return h;
}

/// Uniform in [0, 1) with 53 random bits.
constexpr double uniform01(std::uint64_t k) {
    return static_cast<double>(k >> 11) * 0x1.0p-53;
}

/// Uniform in [-1, 1).
constexpr double uniform_sym(std::uint64_t k) { return 2.0 * uniform01(k) - 1.0; }

/// Standard normal via Box-Muller on two sub-keys of `k`.
inline double gaussian(std::uint64_t k) {
    double u1 = uniform01(mix64(k ^ 0xD1B54A32D192ED03ULL));
    const double u2 = uniform01(mix64(k ^ 0x8CB92BA72F3D8DD7ULL));
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

/// Standard normal truncated to |z| <= bound, by rejection over sub-draws.
/// The loop is deterministic (attempt index feeds the key) and terminates
/// in one iteration except with probability ~1e-9.
inline double gaussian_truncated(std::uint64_t k, double bound = 6.0) {
    for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
        const double z = gaussian(mix64(k + attempt * kGolden));
        if (std::abs(z) <= bound) return z;
    }
    return bound; // unreachable in practice
}

/// Derives an independent child seed, e.g. one per sweep cell or per trial.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index,
                                    Stream stream = Stream::seed_derive) {
    return key(seed, stream, index);
}

} // namespace floqnoise::rng
