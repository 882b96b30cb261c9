#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace sparsemp {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based generator: the i-th output is a hash of (key, i).
///
/// Keys for substreams are derived from a root seed by repeated mixing, so
/// (seed, replication, stream) always addresses the same sequence regardless
/// of which thread consumes it or in which order streams are created.
/// Satisfies UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

    static CounterRng stream(std::uint64_t seed, std::uint64_t replication,
                             std::uint64_t stream_id = 0) noexcept {
        std::uint64_t k = mix64(seed);
        k = mix64(k ^ mix64(replication + 0x632be59bd9b4e019ULL));
        k = mix64(k ^ mix64(stream_id + 0x8cb92ba72f3d8dd7ULL));
        return CounterRng(k);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept {
        return std::numeric_limits<result_type>::max();
    }

    result_type operator()() noexcept {
        return mix64(key_ + 0x9e3779b97f4a7c15ULL * (++counter_));
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    /// Uniform on (0, 1].
    double uniform_open_low() noexcept {
        return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53;
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    double rademacher() noexcept { return ((*this)() >> 63) ? 1.0 : -1.0; }

    /// Standard normal via Box-Muller; both variates are used.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform_open_low()));
        const double theta = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace sparsemp
