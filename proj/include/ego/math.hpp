#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>

namespace ego {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

inline Mat3 skew(const Vec3& w) {
    Mat3 m;
    m << 0.0, -w.z(), w.y(),
         w.z(), 0.0, -w.x(),
         -w.y(), w.x(), 0.0;
    return m;
}

inline Vec3 vee(const Mat3& m) {
    return Vec3(m(2, 1), m(0, 2), m(1, 0));
}

// Rodrigues formula with series fallback for small angles.
inline Mat3 so3_exp(const Vec3& w) {
    const double theta2 = w.squaredNorm();
    const Mat3 k = skew(w);
    double a, b;
    if (theta2 < 1e-16) {
        a = 1.0 - theta2 / 6.0;
        b = 0.5 - theta2 / 24.0;
    } else {
        const double theta = std::sqrt(theta2);
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / theta2;
    }
    return Mat3::Identity() + a * k + b * k * k;
}

// Rotation-vector logarithm; Eigen's AngleAxis handles the angle-pi branch.
inline Vec3 so3_log(const Mat3& r) {
    const Eigen::AngleAxisd aa(r);
    return aa.angle() * aa.axis();
}

inline Quat quat_exp(const Vec3& w) {
    const double theta2 = w.squaredNorm();
    double c, s_over_theta;
    if (theta2 < 1e-16) {
        c = 1.0 - theta2 / 8.0;
        s_over_theta = 0.5 - theta2 / 48.0;
    } else {
        const double theta = std::sqrt(theta2);
        c = std::cos(0.5 * theta);
        s_over_theta = std::sin(0.5 * theta) / theta;
    }
    return Quat(c, s_over_theta * w.x(), s_over_theta * w.y(), s_over_theta * w.z());
}

inline double clamp01(double x) {
    return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
}

// Quintic smoothstep: C2 at both ends.
inline double smoothstep5(double x) {
    x = clamp01(x);
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0);
}

// Antiderivative of smoothstep5 with F(0) = 0; F(1) = 1/2.
inline double smoothstep5_integral(double x) {
    x = clamp01(x);
    const double x4 = x * x * x * x;
    return x4 * (x * (x - 3.0) + 2.5);
}

inline double deg2rad(double d) { return d * M_PI / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / M_PI; }

}  // namespace ego
