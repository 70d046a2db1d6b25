#pragma once

#include <cstdint>
#include <random>

namespace sepdiff {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to decorrelate derived seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed of replica `index` under root seed `root` (root XOR index, then mixed).
inline std::uint64_t replica_seed(std::uint64_t root, std::uint64_t index) {
    return mix64(root ^ index);
}

/// Independent named substream of one replica (initial data, walks, clock, ...).
enum class Stream : std::uint64_t { initial = 1, walks = 2, clock = 3, mc = 4, aux = 5 };

inline Rng make_rng(std::uint64_t seed, Stream s) {
    return Rng(mix64(seed + 0x632be59bd9b4e019ULL * static_cast<std::uint64_t>(s)));
}

}  // namespace sepdiff
