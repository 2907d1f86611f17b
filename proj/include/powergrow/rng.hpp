#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "powergrow/util.hpp"

namespace powergrow {

// PCG32 (pcg_xsh_rr_64_32). A (seed, stream_id) pair fully determines the
// draw sequence; distinct stream_ids select distinct LCG increments and give
// statistically independent streams. Single-owner: never share an instance
// between concurrent tasks, derive one stream per task instead.
class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed, std::uint64_t stream_id = 0)
        : seed_(seed), stream_id_(stream_id) {
        inc_ = (splitmix(stream_id ^ 0xda3e39cb94b95bdbULL) << 1u) | 1u;
        state_ = 0u;
        next_u32();
        state_ += splitmix(seed);
        next_u32();
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    // New independent stream from the same root seed.
    RandomSource derive(std::uint64_t stream_id) const { return RandomSource(seed_, stream_id); }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    std::uint64_t next_u64() {
        std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Uniform on the open interval (0,1).
    double uniform() {
        double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        return u > 0.0 ? u : 0x1.0p-53;
    }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw UsageError("uniform_int: n must be positive");
        std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
        while (true) {
            std::uint64_t v = next_u64();
            if (v >= threshold) return v % n;
        }
    }

    // Standard normal, Marsaglia polar method with one cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    // Gamma(shape, 1), Marsaglia-Tsang; the shape<1 case goes through the
    // boosted draw in log domain so tiny shapes do not underflow to zero.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw DomainError("gamma: shape must be positive");
        return std::exp(log_gamma_variate(shape));
    }

    // ln of a Gamma(shape,1) draw. Exact for shape >= 1; for shape < 1 uses
    // G(a) = G(a+1) * U^(1/a), computed as ln G(a+1) + ln(U)/a.
    double log_gamma_variate(double shape) {
        if (!(shape > 0.0)) throw DomainError("log_gamma_variate: shape must be positive");
        if (shape < 1.0) {
            double boost = std::log(uniform()) / shape;
            return log_gamma_variate(shape + 1.0) + boost;
        }
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        while (true) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            double u = uniform();
            double x2 = x * x;
            if (u < 1.0 - 0.0331 * x2 * x2) return std::log(d * v);
            if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return std::log(d * v);
        }
    }

    // logit of a Beta(a,b) draw: ln(g_a) - ln(g_b) for independent gammas.
    // Full relative precision even when the draw saturates toward 0 or 1.
    double beta_logit(double a, double b) {
        if (!(a > 0.0) || !(b > 0.0)) throw DomainError("beta_logit: parameters must be positive");
        return log_gamma_variate(a) - log_gamma_variate(b);
    }

    // Beta(a,b) draw clamped to [1e-12, 1-1e-12]; exact boundary values would
    // have infinite logits.
    double beta(double a, double b) {
        double l = beta_logit(a, b);
        double x = 1.0 / (1.0 + std::exp(-l));
        if (x < 1e-12) x = 1e-12;
        if (x > 1.0 - 1e-12) x = 1.0 - 1e-12;
        return x;
    }

private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 0;
    std::uint64_t seed_ = 0;
    std::uint64_t stream_id_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace powergrow
