#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace ego {

// Counter-based deterministic random source. Every draw is a pure function of
// (seed, stream, counter), so adding draws on one stream never perturbs
// another and sequences replay bit-identically for a given seed.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    // FNV-1a hash for naming substreams ("accel-noise", "gyro-bias", ...).
    static constexpr std::uint64_t stream(std::string_view name) {
        std::uint64_t h = 1469598103934665603ull;
        for (char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        return h;
    }

    std::uint64_t bits(std::uint64_t stream_id, std::uint64_t counter) const {
        std::uint64_t v = mix(seed_ ^ (stream_id * 0x9E3779B97F4A7C15ull));
        v = mix(v ^ (counter * 0xBF58476D1CE4E5B9ull));
        return v;
    }

    // Uniform on (0, 1), never exactly 0 or 1.
    double uniform(std::uint64_t stream_id, std::uint64_t counter) const {
        const std::uint64_t b = bits(stream_id, counter);
        return (static_cast<double>(b >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via inverse CDF (Acklam's rational approximation,
    // relative error < 1.2e-9; avoids trig so results are reproducible).
    double normal(std::uint64_t stream_id, std::uint64_t counter) const {
        return inverse_normal_cdf(uniform(stream_id, counter));
    }

    static double inverse_normal_cdf(double p);

private:
    static constexpr std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t seed_;
};

inline double CounterRng::inverse_normal_cdf(double p) {
    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    static constexpr double p_low = 0.02425;

    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - p_low) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace ego
