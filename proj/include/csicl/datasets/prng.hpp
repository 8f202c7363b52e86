#pragma once

// Portable pseudo-random permutation.
//
// Generator: SplitMix64 (Steele, Lea & Flood 2014). The state is the seed
// reinterpreted as uint64; each step adds 0x9E3779B97F4A7C15 and returns the
// mixed value
//     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//     z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//     z =  z ^ (z >> 31)
//
// Bounded draws use rejection against the threshold (2^64 - n) mod n followed
// by a modulo, so every value in [0, n) is equally likely.
//
// Shuffle: Fisher-Yates from the back; for i = n-1 down to 1, swap element i
// with element bounded(i + 1).
//
// These three rules are the whole contract. Changing any of them changes every
// recorded permutation, cache key and golden file downstream.

#include <cstdint>
#include <span>
#include <utility>

namespace csicl::datasets {

class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform draw from [0, bound). bound must be > 0.
    constexpr std::uint64_t bounded(std::uint64_t bound) noexcept {
        const std::uint64_t threshold = (0 - bound) % bound;
        std::uint64_t r = next();
        while (r < threshold) {
            r = next();
        }
        return r % bound;
    }

private:
    std::uint64_t state_;
};

template <typename T>
void fisher_yates_shuffle(std::span<T> items, std::int64_t seed) {
    if (items.size() < 2) {
        return;
    }
    SplitMix64 rng(static_cast<std::uint64_t>(seed));
    for (std::size_t i = items.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.bounded(i + 1));
        using std::swap;
        swap(items[i], items[j]);
    }
}

} // namespace csicl::datasets
