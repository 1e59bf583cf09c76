#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ego/imu.hpp"
#include "ego/math.hpp"
#include "ego/preintegration.hpp"
#include "ego/scene.hpp"

namespace ego {

struct CascadeConfig {
    double tau_d = 0.2;                  // meters
    double tau_theta = deg2rad(15.0);    // radians
    double tau_p = 15.0;                 // pixels
    double tau_v = 0.4;                  // cosine distance
    int min_tracked = 8;                 // Stage-2 track count below which it passes
    double rate_video = 30.0;            // fps
    Vec3 gravity = Vec3(0.0, 0.0, -9.81);

    void validate() const;
};

// Counters over one cascade run. n_keyframes counts frames selected by the
// full cascade (frame 0 is always kept but enters no stage), so
// n_frames >= n_pass_stage1 >= n_pass_stage2 >= n_keyframes and
// n_token_extractions == n_pass_stage2 + 1.
struct StageStats {
    std::int64_t n_frames = 0;
    std::int64_t n_pass_stage1 = 0;
    std::int64_t n_pass_stage2 = 0;
    std::int64_t n_keyframes = 0;
    std::int64_t n_token_extractions = 0;
    double wall_time_stage1 = 0.0;  // seconds, reported only
    double wall_time_stage2 = 0.0;
    double wall_time_stage3 = 0.0;
};

struct KeyframeRecord {
    int frame_index = 0;
    double t = 0.0;
    Eigen::VectorXd visual_token;
    // Half-open range [imu_begin, imu_end) of samples with
    // previous_keyframe.t < sample.t <= this->t; empty for the first record.
    std::size_t imu_begin = 0;
    std::size_t imu_end = 0;
};

struct FrameStamp {
    int index = 0;
    double t = 0.0;
};

using ParallaxProvider =
    std::function<Parallax(const FrameStamp& keyframe, const FrameStamp& candidate)>;
using TokenProvider = std::function<Eigen::VectorXd(const FrameStamp& frame)>;

struct CascadeResult {
    std::vector<KeyframeRecord> keyframes;
    StageStats stats;
};

// Algorithm: frame 0 is always a keyframe; every later frame runs the stages
// in order with short-circuit discard (stage 1 discards iff d < tau_d AND
// theta < tau_theta; stage 2 iff parallax < tau_p; stage 3 iff cosine
// distance < tau_v). The token provider is invoked only for frames that
// reach stage 3. R0/v0 seed the gyro-propagated integrator at frame 0.
CascadeResult run_cascade(std::span<const FrameStamp> frames, const ImuSequence& imu,
                          const CascadeConfig& cfg, const ParallaxProvider& parallax_provider,
                          const TokenProvider& token_provider,
                          const Mat3& R0 = Mat3::Identity(), const Vec3& v0 = Vec3::Zero());

// 1 - a.b / (|a||b|), in [0, 2]. Throws on a zero-norm input.
double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace ego
