#pragma once

#include <cstdint>
#include <vector>

#include "ego/math.hpp"
#include "ego/trajectory.hpp"

namespace ego {

// One 6-axis body-frame measurement.
struct ImuSample {
    double t = 0.0;
    Vec3 gyro = Vec3::Zero();   // rad/s
    Vec3 accel = Vec3::Zero();  // m/s^2
};

struct ImuSequence {
    std::vector<ImuSample> samples;
    double rate = 0.0;  // Hz, samples are uniformly spaced at 1/rate

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

// Continuous-time noise densities (per sqrt(Hz)) plus the generator seed.
struct NoiseModel {
    double sigma_a = 2.0e-2;   // accelerometer white noise, m/s^2/sqrt(Hz)
    double sigma_g = 1.5e-3;   // gyroscope white noise, rad/s/sqrt(Hz)
    double sigma_ba = 3.0e-3;  // accelerometer bias random walk, m/s^3/sqrt(Hz)
    double sigma_bg = 2.0e-5;  // gyroscope bias random walk, rad/s^2/sqrt(Hz)
    std::uint64_t seed = 0;

    static NoiseModel zero() { return {0.0, 0.0, 0.0, 0.0, 0}; }
    NoiseModel scaled(double factor) const {
        return {sigma_a * factor, sigma_g * factor, sigma_ba * factor, sigma_bg * factor, seed};
    }
};

// Gravity-aligned world frame: by convention the Z axis points up, so the
// gravity vector is (0, 0, -9.81). R0 is the initial world<-body rotation,
// carried for consumers that seed an integrator.
struct WorldFrame {
    Vec3 gravity = Vec3(0.0, 0.0, -9.81);
    Mat3 R0 = Mat3::Identity();
};

// Ideal body-frame readings sampled at t0 + k/rate over the spline interval:
//   accel = R(t)^T (a(t) - g),  gyro = omega_body(t).
ImuSequence synthesize_ideal(const SplineTrajectory& spline, const WorldFrame& frame,
                             double rate = 200.0);

// Additive white noise (density / sqrt(dt) per sample) plus Brownian bias
// (increments of std density * sqrt(dt), starting at zero). Deterministic for
// a given model seed; independent substreams per sensor and component.
ImuSequence apply_noise(const ImuSequence& ideal, const NoiseModel& model);

}  // namespace ego
