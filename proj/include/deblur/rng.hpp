#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace deblur {

// xoshiro256++ with splitmix64 seeding. Self-contained so that streams are
// bit-reproducible across platforms and across save/load, independent of the
// standard library's distribution implementations.
class Rng {
public:
    Rng() : Rng(0) {}
    explicit Rng(std::uint64_t seed);

    // Derives an independent substream from (seed, path...). Used to give each
    // (iteration, batch slot, purpose) its own deterministic stream.
    static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

    std::uint64_t next_u64();

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01();
    double uniform(double lo, double hi);

    // Uniform integer in [0, n), n > 0. Rejection sampling, no modulo bias.
    int uniform_int(int n);

    // Box-Muller, always consumes exactly two uniforms (no cached spare), so a
    // stream of draws is reproducible regardless of call interleaving.
    double normal(double mean = 0.0, double stddev = 1.0);

    std::array<std::uint64_t, 4> state() const { return s_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

private:
    std::array<std::uint64_t, 4> s_{};
};

// splitmix64 finalizer; also used to hash stream paths.
std::uint64_t splitmix64(std::uint64_t& x);

} // namespace deblur
