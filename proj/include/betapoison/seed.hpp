#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace betapoison {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Child seed for a named stream. Results depend only on the arguments, never on
// call order, so parallel work stays reproducible.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t s = mix_seed(base);
    for (std::uint64_t p : path) {
        s = mix_seed(s ^ mix_seed(p + 0x632be59bd9b4e019ULL));
    }
    return s;
}

// Stream tags used by the pipeline.
namespace stream {
inline constexpr std::uint64_t split = 1;
inline constexpr std::uint64_t attack = 2;
inline constexpr std::uint64_t poison_sample = 3;
inline constexpr std::uint64_t blobs = 4;
inline constexpr std::uint64_t clustering = 5;
inline constexpr std::uint64_t trial = 6;
} // namespace stream

} // namespace betapoison
