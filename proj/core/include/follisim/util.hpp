#pragma once

#include <cstdint>
#include <string>

namespace follisim {

// Deterministic 64-bit generator (splitmix64). Used wherever randomized
// sampling must reproduce bit-for-bit across runs and platforms; the standard
// distributions are avoided because their output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

private:
    std::uint64_t state_;
};

// Shortest round-trip decimal representation used in every CSV cell (printf
// "%.17g"); parsing it back recovers the exact double.
std::string format_g17(double v);

} // namespace follisim
