#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ego/math.hpp"
#include "ego/trajectory.hpp"

namespace testutil {

using ego::PoseSample;
using ego::Quat;
using ego::Vec3;

inline std::vector<PoseSample> sample_trajectory(double duration, double rate,
                                                 const std::function<Vec3(double)>& pos,
                                                 const std::function<Quat(double)>& rot) {
    std::vector<PoseSample> out;
    const int n = static_cast<int>(duration * rate) + 1;
    out.reserve(n);
    Quat prev = Quat::Identity();
    for (int k = 0; k < n; ++k) {
        PoseSample s;
        s.t = k / rate;
        s.p = pos(s.t);
        s.q = rot(s.t).normalized();
        if (k > 0 && s.q.dot(prev) < 0.0) s.q.coeffs() *= -1.0;
        prev = s.q;
        out.push_back(s);
    }
    return out;
}

inline std::vector<PoseSample> static_trajectory(const Vec3& p, const Quat& q, double duration = 2.0) {
    return sample_trajectory(duration, 30.0, [&](double) { return p; }, [&](double) { return q; });
}

inline std::vector<PoseSample> linear_trajectory(const Vec3& v, double duration = 2.0) {
    return sample_trajectory(duration, 30.0, [&](double t) { return Vec3(v * t); },
                             [](double) { return Quat::Identity(); });
}

inline std::vector<PoseSample> circle_trajectory(double radius, double omega, double duration = 10.0) {
    return sample_trajectory(duration, 30.0,
                             [&](double t) {
                                 return Vec3(radius * std::cos(omega * t),
                                             radius * std::sin(omega * t), 1.0);
                             },
                             [](double) { return Quat::Identity(); });
}

inline std::vector<PoseSample> yaw_rate_trajectory(double rate_rad_s, double duration = 4.0) {
    return sample_trajectory(duration, 30.0, [](double) { return Vec3(1.0, 2.0, 0.5); },
                             [&](double t) {
                                 return Quat(Eigen::AngleAxisd(rate_rad_s * t, Vec3::UnitZ()));
                             });
}

// Smooth multi-axis motion for derivative and round-trip checks.
inline std::vector<PoseSample> smooth_trajectory(double duration = 10.0, double rate = 30.0) {
    return sample_trajectory(
        duration, rate,
        [](double t) {
            return Vec3(0.8 * std::sin(0.7 * t), 0.5 * std::sin(1.1 * t + 0.4),
                        1.2 + 0.1 * std::sin(0.9 * t));
        },
        [](double t) {
            const double yaw = 0.6 * std::sin(0.5 * t);
            const double pitch = 0.3 * std::sin(0.8 * t + 1.0);
            const double roll = 0.2 * std::sin(0.3 * t + 0.5);
            return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                        Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                        Eigen::AngleAxisd(roll, Vec3::UnitX()));
        });
}

}  // namespace testutil
