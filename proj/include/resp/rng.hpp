#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace resp {

/// Explicit random stream. Never global: every consumer takes an Rng& argument.
///
/// Draws are derived directly from the raw 64-bit engine output instead of the
/// std distributions, whose algorithms differ between standard libraries; this
/// keeps seeded runs reproducible across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Independent stream keyed by (seed, purpose, a, b), e.g. (seed, "augment", epoch, sample).
    static Rng stream(std::uint64_t seed, std::string_view purpose, std::uint64_t a = 0, std::uint64_t b = 0);

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in (0, 1); safe as a log() argument.
    double uniform_open();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal (Box-Muller, no cached second value).
    double normal();
    double gumbel();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace resp
