#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rpf {

/// Per-record random stream: a 64-bit Mersenne Twister seeded from
/// (seed, stream) through splitmix64, so record i never depends on how many
/// draws earlier records consumed or which thread produced them.
class RecordRng {
  public:
    RecordRng(std::uint64_t seed, std::uint64_t stream) : engine_(mix(mix(seed) ^ (stream + 0x9e3779b97f4a7c15ULL))) {}

    /// Uniform in [0, 1) with 53 random bits; portable across standard libraries.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard exponential, used for symmetric Dirichlet(1) shares.
    double exponential() { return -std::log1p(-uniform()); }

    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace rpf
