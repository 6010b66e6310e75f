#pragma once

// SplitMix64: tiny counter-style generator with 64-bit arithmetic only, so
// streams are identical across platforms. Substreams are derived by mixing
// (seed, index), which keeps parallel and serial replicate runs bit-equal.

#include <cstdint>

#include "links.hpp"

namespace diagmeta {

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct SplitMix64 {
    std::uint64_t state = 0;

    SplitMix64() = default;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        return mix64(z);
    }

    // uniform on [2^-54, 1): never exactly 0 or 1
    double next_double() {
        const double u = static_cast<double>(next() >> 11) * 0x1.0p-53;
        return u > 0.0 ? u : 0x1.0p-54;
    }

    // uniform integer on [lo, hi]
    long long next_int(long long lo, long long hi) {
        const double u = next_double();
        const long long span = hi - lo + 1;
        long long v = lo + static_cast<long long>(u * static_cast<double>(span));
        return v > hi ? hi : v;
    }

    // standard normal by inversion
    double next_normal() { return normal_quantile(next_double()); }
};

inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
    return mix64(seed + 0x9e3779b97f4a7c15ULL * (index + 1));
}

}  // namespace diagmeta
