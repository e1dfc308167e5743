#pragma once

#include <cstdint>
#include <random>

namespace pileup {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent streams for the different random draws of one replication
// (arrivals, energies, shapes, noise) derived from a single user seed.
enum class Stream : std::uint64_t { arrivals = 1, energies = 2, shapes = 3, noise = 4, misc = 5 };

inline Rng make_rng(std::uint64_t seed, Stream stream)
{
    return Rng(mix_seed(mix_seed(seed) ^ static_cast<std::uint64_t>(stream)));
}

} // namespace pileup
