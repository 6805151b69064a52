#pragma once

#include <cstdint>

namespace rbm {

// Counter-based random stream: every output is a pure function of
// (seed, stream, counter), so per-member streams are reproducible no matter
// how work is scheduled across threads.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

    std::uint64_t next_u64() {
        std::uint64_t v = mix(seed_ ^ mix(stream_ ^ 0x9e3779b97f4a7c15ull));
        v = mix(v + counter_++);
        return mix(v);
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double next_in(double lo, double hi) { return lo + (hi - lo) * next_double(); }

private:
    // splitmix64 finalizer
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

}  // namespace rbm
