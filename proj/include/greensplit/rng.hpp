#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace greensplit {

/// splitmix64 step; used both as a generator seeder and as a seed mixer.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derive an independent stream seed from (base, salt). Deterministic.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    std::uint64_t s = base ^ (0x632be59bd9b4e019ULL + salt * 0x9e3779b97f4a7c15ULL);
    return splitmix64(s);
}

/// Seeded PRNG with hand-rolled distributions.
///
/// std:: distribution objects are not required to produce the same
/// sequences across standard library implementations, so every sampling
/// routine here is implemented directly on top of the raw generator.
/// Same seed, same sequence, on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 1) {
        std::uint64_t s = seed;
        engine_.seed(splitmix64(s));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + uniform01() * (hi - lo);
    }

    /// Uniform integer in [0, n). Lemire multiply-shift; n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_int: n must be > 0");
        unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * n;
        return static_cast<std::uint64_t>(wide >> 64);
    }

    /// Poisson sample via Knuth's product method. Fine for the small
    /// per-step means used by the simulator (exp underflows near 700).
    long poisson(double mean) {
        if (mean < 0.0) throw std::invalid_argument("poisson: negative mean");
        if (mean == 0.0) return 0;
        const double limit = std::exp(-mean);
        long k = 0;
        double prod = uniform01();
        while (prod > limit) {
            ++k;
            prod *= uniform01();
        }
        return k;
    }

    /// Gaussian via Box-Muller (consumes exactly two uniforms).
    double gaussian(double mean = 0.0, double sd = 1.0) {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 < 1e-300) u1 = 1e-300;
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
        return mean + z * sd;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace greensplit
