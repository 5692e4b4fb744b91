#pragma once

#include <cstdint>
#include <random>

namespace virnet {

/// Deterministic random stream. All randomness in the library flows through
/// explicitly passed Rng instances; forked sub-streams are keyed by index so
/// per-sample results do not depend on scheduling or thread count.
class Rng {
public:
    explicit Rng(std::uint64_t seed);
    Rng(std::uint64_t seed, std::uint64_t stream);

    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in (0, 1]; never returns zero (safe as a log argument).
    double uniform_pos();
    double uniform(double lo, double hi);
    std::uint64_t uniform_u64();
    /// Inclusive integer range.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    /// Standard normal via Box-Muller (one value cached per pair).
    double normal();
    /// Gamma(shape, scale 1) via Marsaglia-Tsang rejection.
    double gamma(double shape);

    /// Independent sub-stream keyed by (this seed, index).
    Rng fork(std::uint64_t index) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

/// splitmix64 mix function; used to decorrelate fork keys.
std::uint64_t mix_u64(std::uint64_t x);

}  // namespace virnet
