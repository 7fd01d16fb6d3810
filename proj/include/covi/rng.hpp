#pragma once

#include <cstdint>
#include <random>

namespace covi {

using Rng = std::mt19937_64;

// Independent stream seeds from one user-facing seed (splitmix64 finaliser).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace streams {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kModel = 2;
inline constexpr std::uint64_t kSampler = 3;
inline constexpr std::uint64_t kConsensus = 4;
inline constexpr std::uint64_t kDiagnostics = 5;
} // namespace streams

} // namespace covi
