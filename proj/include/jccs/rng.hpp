#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace jccs::rng {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//
// Stream layout: the 64-bit key is the user seed; the 128-bit counter is
// (substream, block). Sample i of a run draws from substream i, so parallel
// and serial generation produce identical streams, and a (seed, substream)
// pair fully names a reproducible stream in any language.
class Philox {
public:
    explicit Philox(std::uint64_t seed, std::uint64_t substream = 0)
        : key0_(static_cast<std::uint32_t>(seed)),
          key1_(static_cast<std::uint32_t>(seed >> 32)),
          ctr0_(static_cast<std::uint32_t>(substream)),
          ctr1_(static_cast<std::uint32_t>(substream >> 32)) {}

    std::uint32_t next_u32() {
        if (pos_ == 4) refill();
        return buf_[pos_++];
    }

    std::uint64_t next_u64() {
        std::uint64_t lo = next_u32();
        std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform in [0,1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Modulo bias is negligible for n << 2^64.
    std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

    // Box-Muller, cosine branch only.
    double normal() {
        double u1 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    // Marsaglia-Tsang; shape < 1 via the power boost.
    double gamma(double shape) {
        if (shape <= 0.0) throw std::invalid_argument("gamma shape must be > 0");
        if (shape < 1.0) {
            double u = next_double();
            while (u <= 0.0) u = next_double();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double t = 1.0 + c * x;
            if (t <= 0.0) continue;
            double v = t * t * t;
            double u = next_double();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double beta(double a, double b) {
        double g1 = gamma(a);
        double g2 = gamma(b);
        return g1 / (g1 + g2);
    }

    double weibull(double scale, double shape) {
        if (scale <= 0.0 || shape <= 0.0)
            throw std::invalid_argument("weibull parameters must be > 0");
        double u = next_double();
        return scale * std::pow(-std::log1p(-u), 1.0 / shape);
    }

private:
    void refill() {
        std::uint32_t c0 = ctr0_, c1 = ctr1_, c2 = static_cast<std::uint32_t>(block_),
                      c3 = static_cast<std::uint32_t>(block_ >> 32);
        std::uint32_t k0 = key0_, k1 = key1_;
        for (int round = 0; round < 10; ++round) {
            std::uint64_t p0 = 0xD2511F53ull * c0;
            std::uint64_t p1 = 0xCD9E8D57ull * c2;
            std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            c0 = hi1 ^ c1 ^ k0;
            c1 = lo1;
            c2 = hi0 ^ c3 ^ k1;
            c3 = lo0;
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        buf_ = {c0, c1, c2, c3};
        ++block_;
        pos_ = 0;
    }

    std::uint32_t key0_, key1_;
    std::uint32_t ctr0_, ctr1_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int pos_ = 4;
};

}  // namespace jccs::rng
