#pragma once

// Counter-based random numbers (Philox4x32-10).  Every draw is a pure
// function of (seed, stream, position), so any substream can be replayed
// independently of every other: simulation cycles get one stream each and
// results do not depend on scheduling order.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace spade {
namespace detail {

inline constexpr std::uint32_t philox_m0 = 0xD2511F53u;
inline constexpr std::uint32_t philox_m1 = 0xCD9E8D57u;
inline constexpr std::uint32_t philox_w0 = 0x9E3779B9u;
inline constexpr std::uint32_t philox_w1 = 0xBB67AE85u;

// One block: 4x32 counter, 2x32 key, 10 rounds.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> x,
                                               std::uint32_t k0, std::uint32_t k1) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            k0 += philox_w0;
            k1 += philox_w1;
        }
        const std::uint64_t p0 = static_cast<std::uint64_t>(philox_m0) * x[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(philox_m1) * x[2];
        const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
        const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
        x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
    }
    return x;
}

}  // namespace detail

// One independent stream of draws.  The 128-bit counter is split as
// (block_lo, block_hi, stream_lo, stream_hi); the key is the seed.
class RandomStream {
  public:
    explicit RandomStream(std::uint64_t seed, std::uint64_t stream = 0)
        : key0_(static_cast<std::uint32_t>(seed)),
          key1_(static_cast<std::uint32_t>(seed >> 32)),
          stream_lo_(static_cast<std::uint32_t>(stream)),
          stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

    std::uint32_t next_u32() {
        if (avail_ == 0) refill();
        return buf_[4 - avail_--];
    }

    // 53-bit uniform on [0, 1): 27 high bits of one word, 27..53 of the next.
    double uniform() {
        const double hi = static_cast<double>(next_u32() >> 6);
        const double lo = static_cast<double>(next_u32() >> 5);
        return (hi * 134217728.0 + lo) * (1.0 / 9007199254740992.0);
    }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // Standard normal by Box-Muller; the paired deviate is cached.
    double gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        while (u1 == 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double c = std::cos(6.283185307179586476925287 * u2);
        const double s = std::sin(6.283185307179586476925287 * u2);
        cached_ = r * s;
        have_cached_ = true;
        return r * c;
    }

    // Poisson by Knuth's product-of-uniforms, applied to chunks of mean at
    // most 500 so exp(-chunk) never underflows.  Exact for any lambda.
    long long poisson(double lambda) {
        if (!(lambda >= 0.0)) throw std::invalid_argument("poisson: requires lambda >= 0");
        long long total = 0;
        while (lambda > 0.0) {
            const double chunk = std::min(lambda, 500.0);
            lambda -= chunk;
            const double floor_p = std::exp(-chunk);
            double prod = uniform();
            while (prod > floor_p) {
                ++total;
                prod *= uniform();
            }
        }
        return total;
    }

  private:
    void refill() {
        buf_ = detail::philox4x32({block_lo_, block_hi_, stream_lo_, stream_hi_},
                                  key0_, key1_);
        if (++block_lo_ == 0) ++block_hi_;
        avail_ = 4;
    }

    std::uint32_t key0_, key1_;
    std::uint32_t stream_lo_, stream_hi_;
    std::uint32_t block_lo_ = 0, block_hi_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int avail_ = 0;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace spade
