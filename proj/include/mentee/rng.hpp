#pragma once
// Seeded, portable random number generation (PCG32). Every stochastic piece
// of the library draws from a SeededRng so runs are reproducible bit-for-bit
// across platforms; std::mt19937 distributions are implementation-defined and
// are deliberately not used.

#include <cmath>
#include <cstdint>
#include <vector>

namespace mentee {

namespace detail {
// splitmix64, used to spread user seeds and derive substreams.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
} // namespace detail

class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0x14057b7ef767814fULL)
        : seed_(seed) {
        inc_ = (stream << 1u) | 1u;
        state_ = 0u;
        next_u32();
        state_ += detail::mix64(seed);
        next_u32();
    }

    std::uint64_t seed() const { return seed_; }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    std::uint64_t next_u64() {
        std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Uniform double in [0, 1) with 53 random bits.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller (cosine branch only, so the draw count
    // per call is fixed).
    double next_gaussian() {
        double u1 = next_unit();
        double u2 = next_unit();
        // keep log() finite
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Unbiased integer in [0, n) by rejection.
    std::size_t uniform_index(std::size_t n) {
        if (n <= 1) return 0;
        std::uint64_t bound = n;
        std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t draw;
        do {
            draw = next_u64();
        } while (draw >= limit);
        return static_cast<std::size_t>(draw % bound);
    }

    // Independent substream; a function of the original seed and the salt,
    // not of the current stream position.
    SeededRng derive(std::uint64_t salt) const {
        return SeededRng(detail::mix64(seed_ ^ detail::mix64(salt)));
    }

private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 0;
    std::uint64_t seed_ = 0;
};

// Fisher-Yates with our own generator; std::shuffle is not portable.
template <class T>
void shuffle(std::vector<T>& v, SeededRng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = rng.uniform_index(i);
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace mentee
