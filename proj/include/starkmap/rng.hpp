#pragma once

#include <cstdint>
#include <random>

namespace starkmap {

/// SplitMix64 finalizer; used to derive independent per-pixel streams.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed for pixel (ix, iy) of a run seeded with `seed`. Independent of the
/// order in which pixels are processed.
constexpr std::uint64_t pixel_seed(std::uint64_t seed, int ix, int iy) noexcept {
    return mix64(mix64(seed) ^ mix64((static_cast<std::uint64_t>(static_cast<std::uint32_t>(ix)) << 32) |
                                     static_cast<std::uint32_t>(iy)));
}

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit engine draw.
inline double uniform01(std::mt19937_64& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

}  // namespace starkmap
