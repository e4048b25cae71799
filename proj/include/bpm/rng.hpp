#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bpm {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic random source. All sampling helpers are hand-rolled so that
// streams are reproducible across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; one draw per call (the spare is discarded for stream
    // stability under refactoring).
    double gaussian(double mean, double stddev) {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
        return mean + stddev * z;
    }

private:
    std::mt19937_64 gen_;
};

// Disjoint policy/environment substreams derived from one run seed.
struct RunRngs {
    Rng policy;
    Rng environment;
};

inline RunRngs make_run_rngs(std::uint64_t seed) {
    return RunRngs{Rng(splitmix64(seed ^ 0xa5a5a5a5a5a5a5a5ULL)),
                   Rng(splitmix64(seed ^ 0x5a5a5a5a5a5a5a5aULL))};
}

}  // namespace bpm
