#pragma once

#include <span>
#include <vector>

#include "ego/math.hpp"

namespace ego {

// One timestamped pose. q is the world<-body rotation, scalar-first.
struct PoseSample {
    double t = 0.0;
    Vec3 p = Vec3::Zero();
    Quat q = Quat::Identity();
};

struct Pose {
    Vec3 p;
    Mat3 R;
};

struct PoseDerivatives {
    Vec3 v;           // world-frame linear velocity, m/s
    Vec3 a;           // world-frame linear acceleration, m/s^2
    Vec3 omega_body;  // body-frame angular velocity, rad/s
};

// Continuous-time pose curve: a uniform cubic B-spline for position and a
// cumulative cubic B-spline on SO(3) for rotation, sharing one knot grid.
// Immutable after fitting; evaluation is pure and thread-safe.
class SplineTrajectory {
public:
    double t_start() const { return t0_; }
    double t_end() const { return t1_; }
    double knot_dt() const { return dt_; }
    int num_segments() const { return n_segments_; }

    double max_position_residual() const { return pos_residual_; }
    double max_rotation_residual() const { return rot_residual_; }

    Vec3 position(double t) const;
    Vec3 velocity(double t) const;
    Vec3 acceleration(double t) const;
    Mat3 rotation(double t) const;
    Vec3 angular_velocity_body(double t) const;

    Pose pose(double t) const;
    PoseDerivatives derivatives(double t) const;

private:
    friend SplineTrajectory fit_spline(std::span<const PoseSample>, double);

    struct Segment {
        int index;
        double u;  // normalized position within the segment, [0, 1]
    };
    Segment locate(double t) const;

    double t0_ = 0.0;
    double t1_ = 0.0;
    double dt_ = 0.0;
    int n_segments_ = 0;
    std::vector<Vec3> pos_ctrl_;
    std::vector<Quat> rot_ctrl_;
    std::vector<Vec3> rot_delta_;  // rot_delta_[j] = Log(rot_ctrl_[j-1]^T rot_ctrl_[j])
    double pos_residual_ = 0.0;
    double rot_residual_ = 0.0;
};

// Least-squares fit. Requires >= 8 samples with strictly increasing
// timestamps and knot_dt > 0; throws ValidationError otherwise, and when the
// sampling leaves the normal equations singular.
SplineTrajectory fit_spline(std::span<const PoseSample> samples, double knot_dt = 0.1);

}  // namespace ego
