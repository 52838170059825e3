#pragma once

#include <cstdint>
#include <random>

namespace sdsmlab {

// SplitMix64 finalizer; good avalanche, cheap.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Deterministic stream derivation: the global seed is combined with a
// component tag and a replica index through two SplitMix64 rounds.
// Frozen rule; replica streams are independent of thread scheduling,
// so outputs are byte-identical for any --threads value.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t component, std::uint64_t index) {
    return mix64(mix64(seed ^ (component * 0xA24BAED4963EE407ull)) ^ (index + 1));
}

class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : eng_(seed) {}

    double normal() { return normal_(eng_); }
    double uniform() { return uniform_(eng_); }           // [0,1)
    double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(eng_); }
    std::uint64_t raw() { return eng_(); }
    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace sdsmlab
