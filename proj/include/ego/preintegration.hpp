#pragma once

#include <span>

#include "ego/imu.hpp"
#include "ego/math.hpp"

namespace ego {

// Gyro-propagated navigation state. The rotation is kept as a unit quaternion
// and renormalized every step. prev_* holds the last absorbed sample so that
// steps can average consecutive measurements; carrying it in the state keeps
// split-anywhere integration bit-identical to one-shot integration.
struct NavState {
    Quat q = Quat::Identity();  // world<-body
    Vec3 v = Vec3::Zero();      // world-frame velocity, m/s
    Vec3 p = Vec3::Zero();      // world-frame position, m
    double t = 0.0;

    bool has_prev = false;
    Vec3 prev_gyro = Vec3::Zero();
    Vec3 prev_accel = Vec3::Zero();

    Mat3 R() const { return q.toRotationMatrix(); }
};

NavState make_nav_state(const Mat3& R0, const Vec3& v0, const Vec3& p0, double t0);

// Longest IMU interval treated as contiguous data; larger gaps are an error.
inline constexpr double kMaxImuGap = 0.1;

// One midpoint-scheme step. Consecutive samples are averaged, gravity is
// added back in the world frame, and position uses the pre-update velocity:
//   R <- R * Exp(w_mid * dt)
//   a_world = R(t + dt/2) * a_mid + g
//   p <- p + v dt + a_world dt^2 / 2,  v <- v + a_world dt
// Throws on non-monotone time or a gap above kMaxImuGap.
NavState integrate_step(const NavState& state, const ImuSample& sample, const Vec3& gravity);

// Integrates every sample with t > state.t; a sample at exactly state.t only
// primes the midpoint average.
NavState integrate_sequence(NavState state, std::span<const ImuSample> samples,
                            const Vec3& gravity);

struct RelativeMotion {
    double distance = 0.0;  // ||p_now - p_ref||, meters
    Mat3 delta_R = Mat3::Identity();
};

RelativeMotion relative_motion(const NavState& at_keyframe, const NavState& now);

// theta = arccos((tr(R) - 1) / 2), clamped so near-boundary inputs cannot
// produce NaN. Requires R orthonormal within 1e-6.
double rotation_angle(const Mat3& delta_R);

}  // namespace ego
