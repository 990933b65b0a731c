#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "sgs/common.hpp"

namespace sgs {

// Counter-free splitmix64 stream. The whole generator state is one u64,
// which makes checkpointing and byte-identical resume trivial. Named
// sub-streams are forked by hashing the stream name into the state, so
// every pipeline stage draws from an independent, reproducible sequence.
class Rng {
public:
    Rng() : state_(0x9e3779b97f4a7c15ULL) {}
    explicit Rng(u64 seed) : state_(seed ^ 0x9e3779b97f4a7c15ULL) {}

    static u64 hash_name(std::string_view name) {
        u64 h = 0xcbf29ce484222325ULL;  // FNV-1a
        for (char c : name) {
            h ^= static_cast<u8>(c);
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    // Derives an independent stream; does not advance this stream.
    Rng fork(std::string_view name) const {
        Rng r;
        r.state_ = mix(state_ ^ hash_name(name));
        return r;
    }

    u64 next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    // Uniform in [0, 1). 53-bit mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    u64 next_below(u64 n) {
        // Rejection-free modulo is fine here; n is tiny compared to 2^64.
        return next_u64() % n;
    }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(next_below(static_cast<u64>(hi - lo + 1)));
    }

    // Standard normal via the inverse CDF (Acklam's rational approximation,
    // |error| < 1.2e-9). One uniform per draw, no cached state.
    double normal() {
        double u = uniform();
        if (u < 1e-300) u = 1e-300;
        if (u > 1.0 - 1e-16) u = 1.0 - 1e-16;
        return norm_icdf(u);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    u64 state() const { return state_; }
    void set_state(u64 s) { state_ = s; }

private:
    static u64 mix(u64 z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    static double norm_icdf(double p) {
        static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
        static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
        static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
        static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
        const double plow = 0.02425;
        if (p < plow) {
            double q = std::sqrt(-2.0 * std::log(p));
            return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
                   ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
        }
        if (p > 1.0 - plow) {
            double q = std::sqrt(-2.0 * std::log(1.0 - p));
            return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
                   ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
        }
        double q = p - 0.5, r = q * q;
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }

    u64 state_;
};

}  // namespace sgs
