#include "ego/imu.hpp"

#include <cmath>

#include "ego/errors.hpp"
#include "ego/rng.hpp"

namespace ego {

ImuSequence synthesize_ideal(const SplineTrajectory& spline, const WorldFrame& frame,
                             double rate) {
    if (!(rate > 0.0)) throw ValidationError("synthesize_ideal: rate must be positive");
    const double span = spline.t_end() - spline.t_start();
    if (span < 2.0 / rate) {
        throw ValidationError("synthesize_ideal: spline interval shorter than two samples");
    }
    const int n = static_cast<int>(std::floor(span * rate + 1e-9)) + 1;

    ImuSequence seq;
    seq.rate = rate;
    seq.samples.resize(n);
    for (int k = 0; k < n; ++k) {
        const double t = spline.t_start() + k / rate;
        const Mat3 r = spline.rotation(t);
        ImuSample& s = seq.samples[k];
        s.t = t;
        s.gyro = spline.angular_velocity_body(t);
        s.accel = r.transpose() * (spline.acceleration(t) - frame.gravity);
    }
    return seq;
}

ImuSequence apply_noise(const ImuSequence& ideal, const NoiseModel& model) {
    if (model.sigma_a < 0 || model.sigma_g < 0 || model.sigma_ba < 0 || model.sigma_bg < 0) {
        throw ValidationError("apply_noise: noise densities must be nonnegative");
    }
    if (ideal.samples.size() < 2) return ideal;
    if (model.sigma_a == 0 && model.sigma_g == 0 && model.sigma_ba == 0 && model.sigma_bg == 0) {
        return ideal;
    }
    const double dt = 1.0 / ideal.rate;
    for (std::size_t k = 1; k < ideal.samples.size(); ++k) {
        if (std::abs(ideal.samples[k].t - ideal.samples[k - 1].t - dt) > 1e-9) {
            throw ValidationError("apply_noise: sequence is not uniform-rate");
        }
    }

    const CounterRng rng(model.seed);
    static constexpr auto kAccelNoise = CounterRng::stream("accel-noise");
    static constexpr auto kGyroNoise = CounterRng::stream("gyro-noise");
    static constexpr auto kAccelBias = CounterRng::stream("accel-bias");
    static constexpr auto kGyroBias = CounterRng::stream("gyro-bias");

    const double white_a = model.sigma_a / std::sqrt(dt);
    const double white_g = model.sigma_g / std::sqrt(dt);
    const double walk_a = model.sigma_ba * std::sqrt(dt);
    const double walk_g = model.sigma_bg * std::sqrt(dt);

    ImuSequence out = ideal;
    Vec3 bias_a = Vec3::Zero();
    Vec3 bias_g = Vec3::Zero();
    for (std::size_t k = 0; k < out.samples.size(); ++k) {
        if (k > 0) {
            for (int j = 0; j < 3; ++j) {
                bias_a[j] += walk_a * rng.normal(kAccelBias, (k - 1) * 3 + j);
                bias_g[j] += walk_g * rng.normal(kGyroBias, (k - 1) * 3 + j);
            }
        }
        ImuSample& s = out.samples[k];
        for (int j = 0; j < 3; ++j) {
            s.accel[j] += bias_a[j] + white_a * rng.normal(kAccelNoise, k * 3 + j);
            s.gyro[j] += bias_g[j] + white_g * rng.normal(kGyroNoise, k * 3 + j);
        }
    }
    return out;
}

}  // namespace ego
