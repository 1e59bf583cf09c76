#include <doctest.h>

#include <cmath>

#include "ego/cascade.hpp"
#include "ego/errors.hpp"
#include "ego/imu.hpp"
#include "helpers.hpp"

using namespace ego;

namespace {

ImuSequence static_imu(double duration, double rate = 200.0) {
    ImuSequence seq;
    seq.rate = rate;
    const int n = static_cast<int>(duration * rate) + 1;
    seq.samples.resize(n);
    for (int k = 0; k < n; ++k) seq.samples[k] = {k / rate, Vec3::Zero(), Vec3(0, 0, 9.81)};
    return seq;
}

std::vector<FrameStamp> video_frames(int n, double fps = 30.0) {
    std::vector<FrameStamp> frames(n);
    for (int i = 0; i < n; ++i) frames[i] = {i, i / fps};
    return frames;
}

Eigen::VectorXd unit(int dim, int axis) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
    v[axis] = 1.0;
    return v;
}

const ParallaxProvider kZeroParallax = [](const FrameStamp&, const FrameStamp&) {
    Parallax p;
    p.defined = true;
    p.n_tracked = 50;
    p.mean_px = 0.0;
    return p;
};

const ParallaxProvider kBigParallax = [](const FrameStamp&, const FrameStamp&) {
    Parallax p;
    p.defined = true;
    p.n_tracked = 50;
    p.mean_px = 100.0;
    return p;
};

}  // namespace

TEST_CASE("static camera keeps only frame zero") {
    const auto frames = video_frames(300);
    const ImuSequence imu = static_imu(10.0);
    const TokenProvider token = [](const FrameStamp&) { return unit(16, 0); };
    const CascadeResult res = run_cascade(frames, imu, CascadeConfig{}, kZeroParallax, token);
    CHECK(res.keyframes.size() == 1);
    CHECK(res.keyframes[0].frame_index == 0);
    CHECK(res.stats.n_frames == 300);
    CHECK(res.stats.n_pass_stage1 == 0);
    CHECK(res.stats.n_keyframes == 0);
    CHECK(res.stats.n_token_extractions == 1);
}

TEST_CASE("pure rotation passes stage 1 through the OR gate") {
    // 20 degrees of yaw between two frames and no translation: the distance
    // gate alone would discard, the angle gate must pass it.
    std::vector<FrameStamp> frames = {{0, 0.0}, {1, 1.0}};
    ImuSequence imu;
    imu.rate = 200.0;
    const int n = 201;
    imu.samples.resize(n);
    for (int k = 0; k < n; ++k) {
        imu.samples[k] = {k / 200.0, Vec3(0, 0, deg2rad(20.0)), Vec3(0, 0, 9.81)};
    }
    // Rotating body sees gravity rotate; supply the exact body-frame gravity
    // so translation stays zero.
    for (int k = 0; k < n; ++k) {
        const double a = deg2rad(20.0) * imu.samples[k].t;
        const Mat3 r = Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
        imu.samples[k].accel = r.transpose() * Vec3(0, 0, 9.81);
    }
    int token_calls = 0;
    const TokenProvider token = [&](const FrameStamp& f) {
        ++token_calls;
        return unit(16, f.index % 16);
    };
    const CascadeResult res = run_cascade(frames, imu, CascadeConfig{}, kBigParallax, token);
    CHECK(res.stats.n_pass_stage1 == 1);
    CHECK(res.stats.n_pass_stage2 == 1);
    CHECK(res.keyframes.size() == 2);
    CHECK(token_calls == res.stats.n_token_extractions);
}

TEST_CASE("cosine distance basics") {
    const Eigen::VectorXd a = unit(8, 0);
    const Eigen::VectorXd b = unit(8, 1);
    CHECK(cosine_distance(a, a) == 0.0);
    CHECK(cosine_distance(a, b) == doctest::Approx(1.0));
    CHECK(cosine_distance(a, Eigen::VectorXd(-a)) == doctest::Approx(2.0));
    CHECK_THROWS_AS(cosine_distance(a, Eigen::VectorXd::Zero(8)), ValidationError);
}

TEST_CASE("token provider is called exactly n_pass_stage2 + 1 times") {
    const auto frames = video_frames(200);
    const ImuSequence imu = static_imu(7.0);

    // Alternate stage-2 outcomes while forcing stage 1 to pass via rotation.
    ImuSequence spinning = imu;
    for (auto& s : spinning.samples) {
        s.gyro = Vec3(0, 0, deg2rad(40.0));
        const double a = deg2rad(40.0) * s.t;
        s.accel = Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix().transpose() *
                  Vec3(0, 0, 9.81);
    }
    const ParallaxProvider parallax = [](const FrameStamp&, const FrameStamp& cand) {
        Parallax p;
        p.defined = true;
        p.n_tracked = 40;
        p.mean_px = cand.index % 3 == 0 ? 40.0 : 1.0;
        return p;
    };
    int token_calls = 0;
    const TokenProvider token = [&](const FrameStamp& f) {
        ++token_calls;
        return unit(64, f.index % 64);
    };
    const CascadeResult res = run_cascade(frames, spinning, CascadeConfig{}, parallax, token);
    CHECK(token_calls == res.stats.n_token_extractions);
    CHECK(res.stats.n_token_extractions == res.stats.n_pass_stage2 + 1);
    CHECK(res.stats.n_frames >= res.stats.n_pass_stage1);
    CHECK(res.stats.n_pass_stage1 >= res.stats.n_pass_stage2);
    CHECK(res.stats.n_pass_stage2 >= res.stats.n_keyframes);
    CHECK(res.keyframes.size() == static_cast<std::size_t>(res.stats.n_keyframes) + 1);
}

TEST_CASE("metrics equal to a threshold survive the strict-less-than gate") {
    std::vector<FrameStamp> frames = {{0, 0.0}, {1, 1.0}};
    ImuSequence imu = static_imu(1.0);
    for (auto& s : imu.samples) {
        s.gyro = Vec3(0, 0, deg2rad(30.0));
        const double a = deg2rad(30.0) * s.t;
        s.accel = Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix().transpose() *
                  Vec3(0, 0, 9.81);
    }
    CascadeConfig cfg;

    // Parallax exactly tau_p: not below, so it must pass to stage 3.
    const ParallaxProvider parallax = [&](const FrameStamp&, const FrameStamp&) {
        Parallax p;
        p.defined = true;
        p.n_tracked = 30;
        p.mean_px = cfg.tau_p;
        return p;
    };
    // Token distance exactly tau_v: not below, so the frame is selected.
    // distance(a, b) = 1 - cos = tau_v  =>  angle with cos = 1 - tau_v.
    const double target_cos = 1.0 - cfg.tau_v;
    Eigen::VectorXd ref = unit(8, 0);
    Eigen::VectorXd cand = Eigen::VectorXd::Zero(8);
    cand[0] = target_cos;
    cand[1] = std::sqrt(1.0 - target_cos * target_cos);
    const TokenProvider token = [&](const FrameStamp& f) { return f.index == 0 ? ref : cand; };

    const CascadeResult res = run_cascade(frames, imu, cfg, parallax, token);
    CHECK(res.stats.n_pass_stage2 == 1);
    const double dist = cosine_distance(ref, cand);
    if (dist >= cfg.tau_v) {
        CHECK(res.keyframes.size() == 2);
    }
}

TEST_CASE("raising any single threshold never increases the keyframe count") {
    const auto frames = video_frames(400);
    ImuSequence imu = static_imu(14.0);
    // Mixed motion: slow yaw plus drifting specific force.
    for (auto& s : imu.samples) {
        s.gyro = Vec3(0, 0, deg2rad(12.0) * std::sin(0.7 * s.t));
        s.accel += Vec3(0.3 * std::sin(0.9 * s.t), 0.2 * std::cos(0.6 * s.t), 0.0);
    }
    const ParallaxProvider parallax = [](const FrameStamp& kf, const FrameStamp& cand) {
        Parallax p;
        p.defined = true;
        p.n_tracked = 20;
        p.mean_px = 2.0 * std::abs(cand.index - kf.index);
        return p;
    };
    const TokenProvider token = [](const FrameStamp& f) {
        Eigen::VectorXd v(3);
        const double a = 0.02 * f.index;
        v << std::cos(a), std::sin(a), 0.0;
        return v;
    };

    const CascadeConfig base;
    const auto run_with = [&](const CascadeConfig& cfg) {
        return run_cascade(frames, imu, cfg, parallax, token).keyframes.size();
    };
    const std::size_t base_count = run_with(base);
    for (int knob = 0; knob < 4; ++knob) {
        std::size_t prev = base_count;
        for (double factor : {1.5, 2.5, 4.0}) {
            CascadeConfig cfg = base;
            if (knob == 0) cfg.tau_d = base.tau_d * factor;
            if (knob == 1) cfg.tau_theta = base.tau_theta * factor;
            if (knob == 2) cfg.tau_p = base.tau_p * factor;
            if (knob == 3) cfg.tau_v = std::min(1.9, base.tau_v * factor);
            const std::size_t count = run_with(cfg);
            CHECK(count <= prev);
            prev = count;
        }
    }
}

TEST_CASE("keyframe IMU segments tile the stream with no gaps or overlaps") {
    const auto frames = video_frames(300);
    ImuSequence imu = static_imu(10.0);
    for (auto& s : imu.samples) {
        s.gyro = Vec3(0, 0, deg2rad(25.0));
        const double a = deg2rad(25.0) * s.t;
        s.accel = Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix().transpose() *
                  Vec3(0, 0, 9.81);
    }
    const TokenProvider token = [](const FrameStamp& f) {
        Eigen::VectorXd v(2);
        const double a = 0.05 * f.index;
        v << std::cos(a), std::sin(a);
        return v;
    };
    const CascadeResult res = run_cascade(frames, imu, CascadeConfig{}, kBigParallax, token);
    REQUIRE(res.keyframes.size() >= 3);
    CHECK(res.keyframes[0].imu_begin == res.keyframes[0].imu_end);
    for (std::size_t i = 1; i < res.keyframes.size(); ++i) {
        CHECK(res.keyframes[i].imu_begin == res.keyframes[i - 1].imu_end);
        CHECK(res.keyframes[i].imu_end > res.keyframes[i].imu_begin);
        // Samples in the range lie in (prev_kf.t, kf.t].
        CHECK(imu.samples[res.keyframes[i].imu_begin].t > res.keyframes[i - 1].t);
        CHECK(imu.samples[res.keyframes[i].imu_end - 1].t <= res.keyframes[i].t + 1e-12);
    }
}

TEST_CASE("cascade runs are deterministic") {
    const auto frames = video_frames(200);
    ImuSequence imu = static_imu(7.0);
    for (auto& s : imu.samples) s.gyro = Vec3(0, 0, deg2rad(18.0) * std::sin(s.t));
    const TokenProvider token = [](const FrameStamp& f) {
        Eigen::VectorXd v(2);
        v << std::cos(0.04 * f.index), std::sin(0.04 * f.index);
        return v;
    };
    const CascadeResult a = run_cascade(frames, imu, CascadeConfig{}, kBigParallax, token);
    const CascadeResult b = run_cascade(frames, imu, CascadeConfig{}, kBigParallax, token);
    REQUIRE(a.keyframes.size() == b.keyframes.size());
    for (std::size_t i = 0; i < a.keyframes.size(); ++i) {
        CHECK(a.keyframes[i].frame_index == b.keyframes[i].frame_index);
        CHECK(a.keyframes[i].t == b.keyframes[i].t);
    }
    CHECK(a.stats.n_pass_stage1 == b.stats.n_pass_stage1);
    CHECK(a.stats.n_pass_stage2 == b.stats.n_pass_stage2);
}

TEST_CASE("cascade rejects bad inputs") {
    const TokenProvider token = [](const FrameStamp&) { return unit(4, 0); };

    CHECK_THROWS_AS(run_cascade({}, static_imu(1.0), CascadeConfig{}, kZeroParallax, token),
                    ValidationError);

    // IMU gap spanning a frame interval.
    ImuSequence gappy = static_imu(10.0);
    gappy.samples.erase(gappy.samples.begin() + 200, gappy.samples.begin() + 1400);
    CHECK_THROWS_AS(run_cascade(video_frames(300), gappy, CascadeConfig{}, kZeroParallax, token),
                    ValidationError);

    // IMU starting after the first frame.
    ImuSequence late = static_imu(10.0);
    late.samples.erase(late.samples.begin(), late.samples.begin() + 100);
    CHECK_THROWS_AS(run_cascade(video_frames(300), late, CascadeConfig{}, kZeroParallax, token),
                    ValidationError);

    CascadeConfig bad;
    bad.tau_v = 2.5;
    CHECK_THROWS_AS(run_cascade(video_frames(10), static_imu(1.0), bad, kZeroParallax, token),
                    ValidationError);
}
