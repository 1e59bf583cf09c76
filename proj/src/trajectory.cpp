#include "ego/trajectory.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "ego/errors.hpp"

namespace ego {

namespace {

constexpr double kEvalSlack = 1e-9;  // seconds of tolerance at the interval ends
constexpr int kRotationPasses = 5;

// Uniform cubic B-spline basis over one segment, u in [0, 1].
void basis(double u, double b[4]) {
    const double w = 1.0 - u;
    b[0] = w * w * w / 6.0;
    b[1] = (4.0 - 6.0 * u * u + 3.0 * u * u * u) / 6.0;
    b[2] = (1.0 + 3.0 * u + 3.0 * u * u - 3.0 * u * u * u) / 6.0;
    b[3] = u * u * u / 6.0;
}

void basis_d1(double u, double b[4]) {
    const double w = 1.0 - u;
    b[0] = -w * w / 2.0;
    b[1] = (-12.0 * u + 9.0 * u * u) / 6.0;
    b[2] = (3.0 + 6.0 * u - 9.0 * u * u) / 6.0;
    b[3] = u * u / 2.0;
}

void basis_d2(double u, double b[4]) {
    b[0] = 1.0 - u;
    b[1] = -2.0 + 3.0 * u;
    b[2] = 1.0 - 3.0 * u;
    b[3] = u;
}

// Cumulative basis: lambda_k = sum of basis weights k..3.
void cumulative_basis(double u, double l[3]) {
    l[0] = (5.0 + 3.0 * u - 3.0 * u * u + u * u * u) / 6.0;
    l[1] = (1.0 + 3.0 * u + 3.0 * u * u - 2.0 * u * u * u) / 6.0;
    l[2] = u * u * u / 6.0;
}

void cumulative_basis_d1(double u, double l[3]) {
    const double w = 1.0 - u;
    l[0] = w * w / 2.0;
    l[1] = (1.0 + 2.0 * u - 2.0 * u * u) / 2.0;
    l[2] = u * u / 2.0;
}

}  // namespace

SplineTrajectory::Segment SplineTrajectory::locate(double t) const {
    if (t < t0_ - kEvalSlack || t > t1_ + kEvalSlack) {
        throw ValidationError("spline evaluation time " + std::to_string(t) +
                              " outside [" + std::to_string(t0_) + ", " +
                              std::to_string(t1_) + "]");
    }
    const double rel = std::max(0.0, t - t0_);
    int idx = static_cast<int>(rel / dt_);
    idx = std::clamp(idx, 0, n_segments_ - 1);
    double u = rel / dt_ - idx;
    u = std::clamp(u, 0.0, 1.0);
    return {idx, u};
}

Vec3 SplineTrajectory::position(double t) const {
    const auto [i, u] = locate(t);
    double b[4];
    basis(u, b);
    Vec3 p = Vec3::Zero();
    for (int k = 0; k < 4; ++k) p += b[k] * pos_ctrl_[i + k];
    return p;
}

Vec3 SplineTrajectory::velocity(double t) const {
    const auto [i, u] = locate(t);
    double b[4];
    basis_d1(u, b);
    Vec3 v = Vec3::Zero();
    for (int k = 0; k < 4; ++k) v += b[k] * pos_ctrl_[i + k];
    return v / dt_;
}

Vec3 SplineTrajectory::acceleration(double t) const {
    const auto [i, u] = locate(t);
    double b[4];
    basis_d2(u, b);
    Vec3 a = Vec3::Zero();
    for (int k = 0; k < 4; ++k) a += b[k] * pos_ctrl_[i + k];
    return a / (dt_ * dt_);
}

Mat3 SplineTrajectory::rotation(double t) const {
    const auto [i, u] = locate(t);
    double l[3];
    cumulative_basis(u, l);
    Mat3 r = rot_ctrl_[i].toRotationMatrix();
    for (int k = 0; k < 3; ++k) r = r * so3_exp(l[k] * rot_delta_[i + k + 1]);
    return r;
}

Vec3 SplineTrajectory::angular_velocity_body(double t) const {
    const auto [i, u] = locate(t);
    double l[3], ld[3];
    cumulative_basis(u, l);
    cumulative_basis_d1(u, ld);
    // omega = ld0 * (A3^T A2^T d1) + ld1 * (A3^T d2) + ld2 * d3, scaled by 1/dt.
    const Mat3 a2 = so3_exp(l[1] * rot_delta_[i + 2]);
    const Mat3 a3 = so3_exp(l[2] * rot_delta_[i + 3]);
    Vec3 omega = ld[2] * rot_delta_[i + 3];
    omega += a3.transpose() * (ld[1] * rot_delta_[i + 2]);
    omega += a3.transpose() * (a2.transpose() * (ld[0] * rot_delta_[i + 1]));
    return omega / dt_;
}

Pose SplineTrajectory::pose(double t) const { return {position(t), rotation(t)}; }

PoseDerivatives SplineTrajectory::derivatives(double t) const {
    return {velocity(t), acceleration(t), angular_velocity_body(t)};
}

SplineTrajectory fit_spline(std::span<const PoseSample> samples, double knot_dt) {
    const int n = static_cast<int>(samples.size());
    if (n < 8) throw ValidationError("fit_spline needs at least 8 samples, got " + std::to_string(n));
    if (!(knot_dt > 0.0)) throw ValidationError("fit_spline: knot_dt must be positive");
    for (int i = 1; i < n; ++i) {
        if (!(samples[i].t > samples[i - 1].t)) {
            throw ValidationError("fit_spline: timestamps must be strictly increasing (row " +
                                  std::to_string(i) + ")");
        }
    }
    for (const auto& s : samples) {
        if (std::abs(s.q.norm() - 1.0) > 1e-9) {
            throw ValidationError("fit_spline: quaternion norm deviates from 1");
        }
    }

    SplineTrajectory spl;
    spl.t0_ = samples.front().t;
    spl.t1_ = samples.back().t;
    const double span = spl.t1_ - spl.t0_;
    spl.n_segments_ = std::max(1, static_cast<int>(std::llround(span / knot_dt)));
    spl.dt_ = span / spl.n_segments_;
    const int m = spl.n_segments_ + 3;

    // Hemisphere-continuous copy of the sample rotations.
    std::vector<Quat> q(n);
    q[0] = samples[0].q.normalized();
    for (int i = 1; i < n; ++i) {
        q[i] = samples[i].q.normalized();
        if (q[i].dot(q[i - 1]) < 0.0) q[i].coeffs() *= -1.0;
    }

    // Precompute each sample's segment and basis row.
    std::vector<int> seg(n);
    std::vector<std::array<double, 4>> rows(n);
    for (int i = 0; i < n; ++i) {
        const double rel = samples[i].t - spl.t0_;
        int idx = std::clamp(static_cast<int>(rel / spl.dt_), 0, spl.n_segments_ - 1);
        const double u = std::clamp(rel / spl.dt_ - idx, 0.0, 1.0);
        seg[i] = idx;
        basis(u, rows[i].data());
    }

    // Normal equations; the basis support is 4 wide so the matrix is banded.
    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd atb = Eigen::MatrixXd::Zero(m, 3);
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < 4; ++a) {
            for (int b = 0; b < 4; ++b) {
                ata(seg[i] + a, seg[i] + b) += rows[i][a] * rows[i][b];
            }
            atb.row(seg[i] + a) += rows[i][a] * samples[i].p.transpose();
        }
    }

    Eigen::LDLT<Eigen::MatrixXd> ldlt(ata);
    const auto d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-12 * dmax)) {
        throw ValidationError("fit_spline: normal equations are singular (degenerate sampling)");
    }
    const Eigen::MatrixXd ctrl = ldlt.solve(atb);
    spl.pos_ctrl_.resize(m);
    for (int j = 0; j < m; ++j) spl.pos_ctrl_[j] = ctrl.row(j).transpose();

    // Rotation control points start from interpolated sample rotations at the
    // Greville positions (clamped to the data interval, which repeats the end
    // control rotations), then get refined on their increment vectors.
    auto sample_rotation_at = [&](double t) -> Quat {
        if (t <= samples.front().t) return q.front();
        if (t >= samples.back().t) return q.back();
        const auto it = std::upper_bound(
            samples.begin(), samples.end(), t,
            [](double value, const PoseSample& s) { return value < s.t; });
        const int hi = static_cast<int>(it - samples.begin());
        const int lo = hi - 1;
        const double w = (t - samples[lo].t) / (samples[hi].t - samples[lo].t);
        return q[lo].slerp(w, q[hi]);
    };

    spl.rot_ctrl_.resize(m);
    for (int j = 0; j < m; ++j) {
        const double greville = spl.t0_ + (j - 1) * spl.dt_;
        spl.rot_ctrl_[j] = sample_rotation_at(std::clamp(greville, spl.t0_, spl.t1_));
    }

    auto rebuild_deltas = [&]() {
        spl.rot_delta_.assign(m, Vec3::Zero());
        for (int j = 1; j < m; ++j) {
            const Quat rel = spl.rot_ctrl_[j - 1].conjugate() * spl.rot_ctrl_[j];
            spl.rot_delta_[j] = so3_log(rel.toRotationMatrix());
        }
    };
    rebuild_deltas();

    // Gauss-Newton-style passes: the body-frame rotation residual at each
    // sample is distributed to the control rotations through the same basis
    // weights as the position fit (first-order model of the cumulative
    // spline), reusing the factorized normal matrix.
    for (int pass = 0; pass < kRotationPasses; ++pass) {
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m, 3);
        for (int i = 0; i < n; ++i) {
            const Mat3 pred = spl.rotation(samples[i].t);
            const Vec3 err = so3_log(pred.transpose() * q[i].toRotationMatrix());
            for (int a = 0; a < 4; ++a) rhs.row(seg[i] + a) += rows[i][a] * err.transpose();
        }
        const Eigen::MatrixXd delta = ldlt.solve(rhs);
        for (int j = 0; j < m; ++j) {
            const Quat upd = spl.rot_ctrl_[j] * quat_exp(delta.row(j).transpose());
            spl.rot_ctrl_[j] = upd.normalized();
        }
        rebuild_deltas();
    }

    double pos_res = 0.0, rot_res = 0.0;
    for (int i = 0; i < n; ++i) {
        pos_res = std::max(pos_res, (spl.position(samples[i].t) - samples[i].p).norm());
        const Mat3 pred = spl.rotation(samples[i].t);
        rot_res = std::max(rot_res, so3_log(pred.transpose() * q[i].toRotationMatrix()).norm());
    }
    spl.pos_residual_ = pos_res;
    spl.rot_residual_ = rot_res;
    return spl;
}

}  // namespace ego
