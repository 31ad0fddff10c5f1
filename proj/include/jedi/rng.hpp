#pragma once

#include <cstdint>
#include <random>

namespace jedi {

// splitmix64 step; used to spread one master seed into independent streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t s = master ^ (0x632be59bd9b4e019ull * (stream + 1));
    return splitmix64(s);
}

// Deterministic RNG. std::mt19937_64 has a standard-fixed output sequence;
// the draw helpers below avoid std::uniform_*_distribution, whose mapping
// from engine output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Unbiased integer in [0, n) (Lemire rejection on a 32-bit draw).
    std::uint32_t below(std::uint32_t n) {
        std::uint64_t x = engine_() >> 32;
        std::uint64_t m = x * n;
        auto low = static_cast<std::uint32_t>(m);
        if (low < n) {
            const std::uint32_t t = (0u - n) % n;
            while (low < t) {
                x = engine_() >> 32;
                m = x * n;
                low = static_cast<std::uint32_t>(m);
            }
        }
        return static_cast<std::uint32_t>(m >> 32);
    }

    // Integer in [lo, hi], inclusive.
    int range(int lo, int hi) {
        return lo + static_cast<int>(below(static_cast<std::uint32_t>(hi - lo + 1)));
    }

    std::uint8_t byte() { return static_cast<std::uint8_t>(below(256)); }

    // Uniform double in [0, 1).
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    bool chance(double p) { return unit() < p; }

private:
    std::mt19937_64 engine_;
};

} // namespace jedi
