#include "ego/preintegration.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ego/errors.hpp"

namespace ego {

NavState make_nav_state(const Mat3& R0, const Vec3& v0, const Vec3& p0, double t0) {
    NavState s;
    s.q = Quat(R0).normalized();
    s.v = v0;
    s.p = p0;
    s.t = t0;
    return s;
}

NavState integrate_step(const NavState& state, const ImuSample& sample, const Vec3& gravity) {
    const double dt = sample.t - state.t;
    if (!(dt > 0.0)) {
        throw ValidationError("integrate_step: sample time " + std::to_string(sample.t) +
                              " not after state time " + std::to_string(state.t));
    }
    if (dt > kMaxImuGap) {
        throw ValidationError("integrate_step: IMU gap of " + std::to_string(dt) +
                              " s indicates dropped data");
    }

    const Vec3 gyro = state.has_prev ? Vec3(0.5 * (state.prev_gyro + sample.gyro)) : sample.gyro;
    const Vec3 accel =
        state.has_prev ? Vec3(0.5 * (state.prev_accel + sample.accel)) : sample.accel;

    NavState next = state;
    const Quat q_mid = state.q * quat_exp(0.5 * dt * gyro);
    const Vec3 a_world = q_mid * accel + gravity;
    next.p = state.p + state.v * dt + 0.5 * dt * dt * a_world;
    next.v = state.v + dt * a_world;
    next.q = (state.q * quat_exp(dt * gyro)).normalized();
    next.t = sample.t;
    next.has_prev = true;
    next.prev_gyro = sample.gyro;
    next.prev_accel = sample.accel;
    return next;
}

NavState integrate_sequence(NavState state, std::span<const ImuSample> samples,
                            const Vec3& gravity) {
    for (const ImuSample& s : samples) {
        if (std::abs(s.t - state.t) < 1e-12) {
            state.has_prev = true;
            state.prev_gyro = s.gyro;
            state.prev_accel = s.accel;
        } else {
            state = integrate_step(state, s, gravity);
        }
    }
    return state;
}

RelativeMotion relative_motion(const NavState& at_keyframe, const NavState& now) {
    if (now.t < at_keyframe.t) {
        throw ValidationError("relative_motion: current state precedes the keyframe state");
    }
    RelativeMotion rel;
    rel.distance = (now.p - at_keyframe.p).norm();
    rel.delta_R = at_keyframe.R().transpose() * now.R();
    return rel;
}

double rotation_angle(const Mat3& delta_R) {
    const Mat3 defect = delta_R * delta_R.transpose() - Mat3::Identity();
    if (defect.cwiseAbs().maxCoeff() > 1e-6) {
        throw ValidationError("rotation_angle: matrix is not orthonormal within 1e-6");
    }
    const double arg = std::clamp((delta_R.trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(arg);
}

}  // namespace ego
