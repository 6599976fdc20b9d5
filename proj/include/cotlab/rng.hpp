#pragma once

// Seeded randomness shared by every generator in the library.
//
// Everything here is specified down to the bit so that datasets regenerate
// identically on any platform:
//
//   * Xoshiro256** (Blackman & Vigna, 2018 reference version) is the stream
//     generator. Its 256-bit state is filled from a 64-bit seed by four
//     successive SplitMix64 outputs.
//   * derive_seed(base, stream, index) gives independent per-item seeds, so
//     sequence j can be generated without generating 0..j-1.
//   * Integers in [0, n) use Lemire's multiply-shift with rejection (unbiased).
//   * Uniform reals use the top 53 bits, centred: (x >> 11) + 0.5) * 2^-53,
//     which lies strictly inside (0, 1).
//   * Standard normals use the Box-Muller transform. Each pair of uniforms
//     yields (r cos t, r sin t), consumed in that order.
//
// The standard library distributions are avoided on purpose: their output is
// implementation-defined.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace cotlab {

inline constexpr std::uint64_t splitmix64_next(std::uint64_t& state) noexcept {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Stateless SplitMix64 finaliser of a single value.
inline constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    std::uint64_t s = x;
    return splitmix64_next(s);
}

// Named stream tags for derive_seed. Values are part of the on-disk
// reproducibility contract; never renumber.
enum class Stream : std::uint64_t {
    embedding = 1,
    processor_cache = 2,
    sequence = 3,
    langsym_prompt = 4,
    strip = 5,
    random_backend = 6,
};

inline constexpr std::uint64_t derive_seed(std::uint64_t base, Stream stream,
                                           std::uint64_t index) noexcept {
    const std::uint64_t tag = mix64(static_cast<std::uint64_t>(stream) * 0xD1B54A32D192ED03ULL);
    return mix64(mix64(base ^ tag) + index);
}

class Xoshiro256 {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256(std::uint64_t seed) noexcept {
        std::uint64_t sm = seed;
        for (auto& word : s_) word = splitmix64_next(sm);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    bool operator==(const Xoshiro256&) const = default;

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4]{};
};

// Unbiased integer in [0, n). n must be > 0.
inline std::uint64_t uniform_index(Xoshiro256& rng, std::uint64_t n) noexcept {
    unsigned __int128 m = static_cast<unsigned __int128>(rng()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            m = static_cast<unsigned __int128>(rng()) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

// Uniform double strictly inside (0, 1).
inline double uniform_open01(Xoshiro256& rng) noexcept {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

// Fills `out` with i.i.d. N(0, 1) draws in index order. An odd-length fill
// discards the sine half of its final pair.
template <typename Real>
void fill_standard_normal(Xoshiro256& rng, std::span<Real> out) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t i = 0; i < out.size(); i += 2) {
        const double u1 = uniform_open01(rng);
        const double u2 = uniform_open01(rng);
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = two_pi * u2;
        out[i] = static_cast<Real>(radius * std::cos(angle));
        if (i + 1 < out.size()) out[i + 1] = static_cast<Real>(radius * std::sin(angle));
    }
}

// `count` distinct values from [0, pool) by a partial Fisher-Yates shuffle,
// returned in draw order.
inline std::vector<std::uint32_t> sample_without_replacement(Xoshiro256& rng,
                                                             std::uint32_t pool,
                                                             std::uint32_t count) {
    std::vector<std::uint32_t> items(pool);
    std::iota(items.begin(), items.end(), 0U);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::uint32_t>(uniform_index(rng, pool - i));
        std::swap(items[i], items[j]);
    }
    items.resize(count);
    return items;
}

// Full Fisher-Yates permutation of [0, n).
inline std::vector<std::uint64_t> random_permutation(Xoshiro256& rng, std::uint64_t n) {
    std::vector<std::uint64_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::uint64_t{0});
    for (std::uint64_t i = n; i > 1; --i) {
        const std::uint64_t j = uniform_index(rng, i);
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

}  // namespace cotlab
