#include <doctest.h>

#include <cmath>

#include "ego/errors.hpp"
#include "ego/imu.hpp"
#include "helpers.hpp"

using namespace ego;
using testutil::sample_trajectory;
using testutil::smooth_trajectory;
using testutil::static_trajectory;

namespace {

ImuSequence constant_sequence(int n, double rate, const Vec3& gyro, const Vec3& accel) {
    ImuSequence seq;
    seq.rate = rate;
    seq.samples.resize(n);
    for (int k = 0; k < n; ++k) {
        seq.samples[k] = {k / rate, gyro, accel};
    }
    return seq;
}

}  // namespace

TEST_CASE("static level pose reads gravity on the z axis only") {
    const auto samples = static_trajectory(Vec3(0.5, 0.5, 1.0), Quat::Identity());
    const SplineTrajectory spl = fit_spline(samples, 0.1);
    const ImuSequence seq = synthesize_ideal(spl, WorldFrame{}, 200.0);
    CHECK(seq.samples.size() >= 2);
    for (const ImuSample& s : seq.samples) {
        CHECK((s.accel - Vec3(0.0, 0.0, 9.81)).norm() <= 1e-9);
        CHECK(s.gyro.norm() <= 1e-9);
    }
}

TEST_CASE("tilted static pose reads gravity rotated into the body frame") {
    const Quat q(Eigen::AngleAxisd(0.4, Vec3(1.0, 2.0, 0.3).normalized()));
    const auto samples = static_trajectory(Vec3(1.0, 1.0, 1.0), q);
    const SplineTrajectory spl = fit_spline(samples, 0.1);
    const ImuSequence seq = synthesize_ideal(spl, WorldFrame{}, 200.0);
    const Vec3 expect = q.toRotationMatrix().transpose() * Vec3(0.0, 0.0, 9.81);
    for (const ImuSample& s : seq.samples) {
        CHECK((s.accel - expect).norm() <= 1e-9);
    }
}

TEST_CASE("free fall reads zero specific force") {
    const Vec3 g(0.0, 0.0, -9.81);
    const auto samples = sample_trajectory(
        1.5, 30.0, [&](double t) { return Vec3(Vec3(0, 0, 10.0) + 0.5 * t * t * g); },
        [](double) { return Quat(Eigen::AngleAxisd(0.3, Vec3::UnitY())); });
    const SplineTrajectory spl = fit_spline(samples, 0.1);
    const ImuSequence seq = synthesize_ideal(spl, WorldFrame{}, 200.0);
    for (const ImuSample& s : seq.samples) {
        CHECK(s.accel.norm() <= 1e-7);
    }
}

TEST_CASE("constant velocity reads gravity only") {
    const auto samples = sample_trajectory(2.0, 30.0,
                                           [](double t) { return Vec3(1.0 * t, 0.0, 0.0); },
                                           [](double) { return Quat::Identity(); });
    const SplineTrajectory spl = fit_spline(samples, 0.1);
    const ImuSequence seq = synthesize_ideal(spl, WorldFrame{}, 200.0);
    for (const ImuSample& s : seq.samples) {
        CHECK((s.accel - Vec3(0.0, 0.0, 9.81)).norm() <= 1e-8);
        CHECK(s.gyro.norm() <= 1e-9);
    }
}

TEST_CASE("frame correctness: rotating world and poses leaves body output unchanged") {
    const Quat world_rot(Eigen::AngleAxisd(0.7, Vec3(0.2, -0.5, 1.0).normalized()));
    const Mat3 q = world_rot.toRotationMatrix();

    const auto base = smooth_trajectory(4.0);
    auto rotated = base;
    for (auto& s : rotated) {
        s.p = q * s.p;
        s.q = (world_rot * s.q).normalized();
    }
    const SplineTrajectory spl_a = fit_spline(base, 0.1);
    const SplineTrajectory spl_b = fit_spline(rotated, 0.1);

    WorldFrame frame_a;
    WorldFrame frame_b;
    frame_b.gravity = q * frame_a.gravity;

    const ImuSequence seq_a = synthesize_ideal(spl_a, frame_a, 200.0);
    const ImuSequence seq_b = synthesize_ideal(spl_b, frame_b, 200.0);
    REQUIRE(seq_a.samples.size() == seq_b.samples.size());
    for (std::size_t i = 0; i < seq_a.samples.size(); i += 37) {
        CHECK((seq_a.samples[i].accel - seq_b.samples[i].accel).norm() <= 1e-9);
        CHECK((seq_a.samples[i].gyro - seq_b.samples[i].gyro).norm() <= 1e-9);
    }
}

TEST_CASE("zero noise model returns the input bit-identically") {
    const ImuSequence seq = constant_sequence(100, 200.0, Vec3(0.1, 0, 0), Vec3(0, 0, 9.81));
    const ImuSequence out = apply_noise(seq, NoiseModel::zero());
    REQUIRE(out.samples.size() == seq.samples.size());
    for (std::size_t i = 0; i < seq.samples.size(); ++i) {
        CHECK(out.samples[i].gyro == seq.samples[i].gyro);
        CHECK(out.samples[i].accel == seq.samples[i].accel);
    }
}

TEST_CASE("white noise std matches the discretization identity") {
    // sigma_discrete = sigma_density * sqrt(rate); 2e-2 * sqrt(200) = 0.2828.
    NoiseModel model;
    model.sigma_g = 0.0;
    model.sigma_ba = 0.0;
    model.sigma_bg = 0.0;
    model.seed = 2024;
    const int n = 100000;
    const ImuSequence seq = constant_sequence(n, 200.0, Vec3::Zero(), Vec3::Zero());
    const ImuSequence out = apply_noise(seq, model);
    const double expect = 2.0e-2 * std::sqrt(200.0);
    for (int axis = 0; axis < 3; ++axis) {
        double sum = 0.0, sum2 = 0.0;
        for (const auto& s : out.samples) {
            sum += s.accel[axis];
            sum2 += s.accel[axis] * s.accel[axis];
        }
        const double mean = sum / n;
        const double std = std::sqrt(sum2 / n - mean * mean);
        CHECK(std == doctest::Approx(expect).epsilon(0.02));
    }
}

TEST_CASE("white noise has negligible lag-1 autocorrelation") {
    NoiseModel model;
    model.sigma_ba = 0.0;
    model.sigma_bg = 0.0;
    model.seed = 5;
    const int n = 100000;
    const ImuSequence out =
        apply_noise(constant_sequence(n, 200.0, Vec3::Zero(), Vec3::Zero()), model);
    double c0 = 0.0, c1 = 0.0;
    for (int i = 0; i < n; ++i) {
        c0 += out.samples[i].accel.x() * out.samples[i].accel.x();
        if (i + 1 < n) c1 += out.samples[i].accel.x() * out.samples[i + 1].accel.x();
    }
    CHECK(std::abs(c1 / c0) <= 0.01);
}

TEST_CASE("bias random walk variance grows linearly in time") {
    // With white noise off, the final accel sample is exactly the bias at T.
    const double T = 10.0;
    const double rate = 200.0;
    const int n = static_cast<int>(T * rate) + 1;
    const double sigma_ba = 3.0e-3;
    const int runs = 1000;

    double var[3] = {0.0, 0.0, 0.0};
    for (int run = 0; run < runs; ++run) {
        NoiseModel model;
        model.sigma_a = 0.0;
        model.sigma_g = 0.0;
        model.sigma_bg = 0.0;
        model.sigma_ba = sigma_ba;
        model.seed = 9000 + run;
        const ImuSequence out =
            apply_noise(constant_sequence(n, rate, Vec3::Zero(), Vec3::Zero()), model);
        const Vec3 b = out.samples.back().accel;
        for (int axis = 0; axis < 3; ++axis) var[axis] += b[axis] * b[axis];
    }
    const double expect = sigma_ba * sigma_ba * T;
    for (int axis = 0; axis < 3; ++axis) {
        CHECK(var[axis] / runs == doctest::Approx(expect).epsilon(0.05));
    }
}

TEST_CASE("apply_noise is deterministic per seed") {
    NoiseModel model;
    model.seed = 77;
    const ImuSequence seq = constant_sequence(500, 200.0, Vec3::Zero(), Vec3(0, 0, 9.81));
    const ImuSequence a = apply_noise(seq, model);
    const ImuSequence b = apply_noise(seq, model);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        max_diff = std::max(max_diff, (a.samples[i].accel - b.samples[i].accel).cwiseAbs().maxCoeff());
        max_diff = std::max(max_diff, (a.samples[i].gyro - b.samples[i].gyro).cwiseAbs().maxCoeff());
    }
    CHECK(max_diff == 0.0);

    model.seed = 78;
    const ImuSequence c = apply_noise(seq, model);
    double seed_diff = 0.0;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        seed_diff = std::max(seed_diff, (a.samples[i].accel - c.samples[i].accel).cwiseAbs().maxCoeff());
    }
    CHECK(seed_diff > 0.0);
}

TEST_CASE("synthesis and noise reject invalid input") {
    const auto samples = static_trajectory(Vec3::Zero(), Quat::Identity(), 1.0);
    const SplineTrajectory spl = fit_spline(samples, 0.1);
    CHECK_THROWS_AS(synthesize_ideal(spl, WorldFrame{}, 0.0), ValidationError);
    CHECK_THROWS_AS(synthesize_ideal(spl, WorldFrame{}, 1.0), ValidationError);

    ImuSequence nonuniform = constant_sequence(10, 200.0, Vec3::Zero(), Vec3::Zero());
    nonuniform.samples[5].t += 0.002;
    CHECK_THROWS_AS(apply_noise(nonuniform, NoiseModel{}), ValidationError);
}
