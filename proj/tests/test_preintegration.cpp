#include <doctest.h>

#include <cmath>

#include "ego/errors.hpp"
#include "ego/imu.hpp"
#include "ego/preintegration.hpp"
#include "helpers.hpp"

using namespace ego;
using testutil::smooth_trajectory;

namespace {

const Vec3 kGravity(0.0, 0.0, -9.81);

ImuSequence constant_sequence(double duration, double rate, const Vec3& gyro, const Vec3& accel) {
    ImuSequence seq;
    seq.rate = rate;
    const int n = static_cast<int>(duration * rate) + 1;
    seq.samples.resize(n);
    for (int k = 0; k < n; ++k) seq.samples[k] = {k / rate, gyro, accel};
    return seq;
}

}  // namespace

TEST_CASE("static level input leaves velocity and position untouched") {
    const ImuSequence seq = constant_sequence(1.0, 200.0, Vec3::Zero(), Vec3(0, 0, 9.81));
    NavState state = make_nav_state(Mat3::Identity(), Vec3::Zero(), Vec3::Zero(), 0.0);
    state = integrate_sequence(state, seq.samples, kGravity);
    CHECK(state.v.norm() <= 1e-12);
    CHECK(state.p.norm() <= 1e-12);
    CHECK(state.t == doctest::Approx(1.0));
}

TEST_CASE("constant yaw rate integrates to the closed-form rotation") {
    const ImuSequence seq = constant_sequence(1.0, 200.0, Vec3(0, 0, M_PI / 2), Vec3::Zero());
    NavState state = make_nav_state(Mat3::Identity(), Vec3::Zero(), Vec3::Zero(), 0.0);
    state = integrate_sequence(state, seq.samples, Vec3::Zero());
    const double theta = rotation_angle(state.R());
    CHECK(std::abs(theta - M_PI / 2) <= deg2rad(0.02));
    // Axis is z.
    CHECK(std::abs(state.R()(2, 2) - 1.0) <= 1e-9);
}

TEST_CASE("noise-free round trip tracks the spline ground truth") {
    const auto samples = smooth_trajectory(5.0);
    const SplineTrajectory spl = fit_spline(samples, 0.1);
    const ImuSequence seq = synthesize_ideal(spl, WorldFrame{}, 200.0);

    NavState state = make_nav_state(spl.rotation(spl.t_start()), spl.velocity(spl.t_start()),
                                    spl.position(spl.t_start()), spl.t_start());
    state = integrate_sequence(state, seq.samples, kGravity);

    const double span = state.t - spl.t_start();
    CHECK((state.p - spl.position(state.t)).norm() <= 1e-3 * span);
    const Vec3 rot_err = so3_log(state.R().transpose() * spl.rotation(state.t));
    CHECK(rot_err.norm() <= deg2rad(0.1) * span);
}

TEST_CASE("relative motion distances and angles") {
    const NavState a = make_nav_state(Mat3::Identity(), Vec3::Zero(), Vec3::Zero(), 0.0);

    SUBCASE("identical states") {
        const RelativeMotion rel = relative_motion(a, a);
        CHECK(rel.distance == 0.0);
        CHECK(rotation_angle(rel.delta_R) == 0.0);
    }

    SUBCASE("straight traverse") {
        NavState b = a;
        b.p = Vec3(0.5, 0.0, 0.0);
        b.t = 1.0;
        const RelativeMotion rel = relative_motion(a, b);
        CHECK(rel.distance == doctest::Approx(0.5));
        CHECK(rotation_angle(rel.delta_R) <= 1e-12);
    }

    SUBCASE("pure yaw in place") {
        NavState b = a;
        b.q = Quat(Eigen::AngleAxisd(deg2rad(30.0), Vec3::UnitZ()));
        b.t = 1.0;
        const RelativeMotion rel = relative_motion(a, b);
        CHECK(rel.distance <= 1e-12);
        CHECK(rotation_angle(rel.delta_R) == doctest::Approx(deg2rad(30.0)));
    }

    SUBCASE("time order is enforced") {
        NavState b = a;
        b.t = -1.0;
        CHECK_THROWS_AS(relative_motion(a, b), ValidationError);
    }
}

TEST_CASE("rotation angle formula") {
    CHECK(rotation_angle(Mat3::Identity()) == 0.0);
    const Mat3 yaw90 = Eigen::AngleAxisd(M_PI / 2, Vec3::UnitZ()).toRotationMatrix();
    CHECK(rotation_angle(yaw90) == doctest::Approx(M_PI / 2));
    // 180 degrees about x: trace is -1, arccos argument exactly at the
    // boundary; must not produce NaN.
    const Mat3 flip = Eigen::AngleAxisd(M_PI, Vec3::UnitX()).toRotationMatrix();
    const double theta = rotation_angle(flip);
    CHECK(std::isfinite(theta));
    CHECK(theta == doctest::Approx(M_PI));

    Mat3 bad = Mat3::Identity();
    bad(0, 0) = 1.1;
    CHECK_THROWS_AS(rotation_angle(bad), ValidationError);
}

TEST_CASE("integration split at any sample boundary is bit-identical") {
    const auto samples = smooth_trajectory(2.0);
    const SplineTrajectory spl = fit_spline(samples, 0.1);
    const ImuSequence seq = synthesize_ideal(spl, WorldFrame{}, 200.0);

    const NavState init = make_nav_state(spl.rotation(0.0), spl.velocity(0.0), spl.position(0.0), 0.0);
    const NavState whole = integrate_sequence(init, seq.samples, kGravity);

    for (std::size_t split : {std::size_t(1), std::size_t(57), seq.samples.size() - 1}) {
        NavState part = integrate_sequence(
            init, std::span<const ImuSample>(seq.samples.data(), split), kGravity);
        part = integrate_sequence(
            part,
            std::span<const ImuSample>(seq.samples.data() + split, seq.samples.size() - split),
            kGravity);
        CHECK(part.p == whole.p);
        CHECK(part.v == whole.v);
        CHECK(part.q.coeffs() == whole.q.coeffs());
    }
}

TEST_CASE("gravity-direction invariance of the displacement") {
    const auto base = smooth_trajectory(3.0);
    const Quat world_rot(Eigen::AngleAxisd(1.1, Vec3(0.3, 0.7, -0.2).normalized()));
    const Mat3 q = world_rot.toRotationMatrix();

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

    NavState sa = make_nav_state(spl_a.rotation(0.0), spl_a.velocity(0.0), spl_a.position(0.0), 0.0);
    NavState sb = make_nav_state(spl_b.rotation(0.0), spl_b.velocity(0.0), spl_b.position(0.0), 0.0);
    const NavState a0 = sa;
    const NavState b0 = sb;
    sa = integrate_sequence(sa, seq_a.samples, frame_a.gravity);
    sb = integrate_sequence(sb, seq_b.samples, frame_b.gravity);

    const double da = relative_motion(a0, sa).distance;
    const double db = relative_motion(b0, sb).distance;
    CHECK(std::abs(da - db) <= 1e-9);
}

TEST_CASE("steps reject non-monotone time and gaps") {
    NavState state = make_nav_state(Mat3::Identity(), Vec3::Zero(), Vec3::Zero(), 1.0);
    CHECK_THROWS_AS(integrate_step(state, ImuSample{1.0, Vec3::Zero(), Vec3::Zero()}, kGravity),
                    ValidationError);
    CHECK_THROWS_AS(integrate_step(state, ImuSample{0.5, Vec3::Zero(), Vec3::Zero()}, kGravity),
                    ValidationError);
    CHECK_THROWS_AS(integrate_step(state, ImuSample{1.2, Vec3::Zero(), Vec3::Zero()}, kGravity),
                    ValidationError);
    CHECK_NOTHROW(integrate_step(state, ImuSample{1.05, Vec3::Zero(), Vec3::Zero()}, kGravity));
}

TEST_CASE("round-trip bound holds over a 10-trajectory suite") {
    for (int seed = 0; seed < 10; ++seed) {
        // Vary the smooth trajectory by phase-shifting through time offsets.
        const auto samples = testutil::sample_trajectory(
            4.0, 30.0,
            [&](double t) {
                const double u = t + 0.37 * seed;
                return Vec3(0.7 * std::sin(0.8 * u), 0.6 * std::sin(1.2 * u + 0.4),
                            1.0 + 0.1 * std::sin(0.6 * u));
            },
            [&](double t) {
                const double u = t + 0.53 * seed;
                return Quat(Eigen::AngleAxisd(0.7 * std::sin(0.4 * u), Vec3::UnitZ()) *
                            Eigen::AngleAxisd(0.25 * std::sin(0.9 * u), Vec3::UnitY()));
            });
        const SplineTrajectory spl = fit_spline(samples, 0.1);
        const ImuSequence seq = synthesize_ideal(spl, WorldFrame{}, 200.0);
        NavState state = make_nav_state(spl.rotation(0.0), spl.velocity(0.0), spl.position(0.0), 0.0);
        state = integrate_sequence(state, seq.samples, kGravity);
        const double span = state.t;
        CHECK((state.p - spl.position(state.t)).norm() <= 1e-3 * span);
        CHECK(so3_log(state.R().transpose() * spl.rotation(state.t)).norm() <=
              deg2rad(0.1) * span);
    }
}
