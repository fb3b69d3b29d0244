#pragma once

#include <cstdint>
#include <random>

namespace roughwz {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed of the independent stream for one path. Depends only on (master, index),
/// so batches come out identical regardless of which worker draws which path.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(master) ^ splitmix64(index ^ 0xD1B54A32D192ED03ULL));
}

/// Derives a sub-seed, e.g. for an independent direction batch.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt) noexcept {
    return splitmix64(master ^ splitmix64(salt + 0x2545F4914F6CDD1DULL));
}

class NormalStream {
public:
    NormalStream(std::uint64_t master, std::uint64_t index) : engine_(stream_seed(master, index)) {}

    double operator()() { return normal_(engine_); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace roughwz
