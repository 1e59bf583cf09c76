#include "ego/cascade.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "ego/errors.hpp"

namespace ego {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Advances the navigation state to the target time: whole samples first,
// then a partial step against a sample interpolated at the target (or held
// from the last sample when the stream ends within a tick of the target).
class ImuCursor {
public:
    ImuCursor(const ImuSequence& imu, const NavState& initial) : imu_(imu), state_(initial) {
        next_ = 0;
        while (next_ < imu_.samples.size() && imu_.samples[next_].t <= state_.t + 1e-12) {
            if (std::abs(imu_.samples[next_].t - state_.t) < 1e-9) {
                state_.has_prev = true;
                state_.prev_gyro = imu_.samples[next_].gyro;
                state_.prev_accel = imu_.samples[next_].accel;
            }
            ++next_;
        }
    }

    const NavState& state() const { return state_; }
    std::size_t next_index() const { return next_; }

    void advance_to(double t, int frame_index) {
        while (next_ < imu_.samples.size() && imu_.samples[next_].t <= t + 1e-12) {
            state_ = integrate_step(state_, imu_.samples[next_], gravity_);
            ++next_;
        }
        const double remainder = t - state_.t;
        if (remainder <= 1e-9) return;
        ImuSample boundary;
        boundary.t = t;
        if (next_ < imu_.samples.size()) {
            const ImuSample& hi = imu_.samples[next_];
            const ImuSample& lo = next_ > 0 ? imu_.samples[next_ - 1] : hi;
            if (hi.t - lo.t > kMaxImuGap) {
                throw ValidationError("run_cascade: IMU gap of " + std::to_string(hi.t - lo.t) +
                                      " s spans frame " + std::to_string(frame_index));
            }
            const double w = hi.t > lo.t ? (t - lo.t) / (hi.t - lo.t) : 0.0;
            boundary.gyro = (1.0 - w) * lo.gyro + w * hi.gyro;
            boundary.accel = (1.0 - w) * lo.accel + w * hi.accel;
        } else if (remainder <= kMaxImuGap) {
            // Stream ends just short of the frame: hold the last sample.
            boundary.gyro = state_.prev_gyro;
            boundary.accel = state_.prev_accel;
        } else {
            throw ValidationError("run_cascade: IMU data ends " + std::to_string(remainder) +
                                  " s before frame " + std::to_string(frame_index));
        }
        state_ = integrate_step(state_, boundary, gravity_);
    }

    void set_gravity(const Vec3& g) { gravity_ = g; }

private:
    const ImuSequence& imu_;
    NavState state_;
    std::size_t next_;
    Vec3 gravity_ = Vec3::Zero();
};

}  // namespace

void CascadeConfig::validate() const {
    if (!(tau_d > 0.0)) throw ValidationError("CascadeConfig: tau_d must be positive");
    if (!(tau_theta > 0.0)) throw ValidationError("CascadeConfig: tau_theta must be positive");
    if (!(tau_p > 0.0)) throw ValidationError("CascadeConfig: tau_p must be positive");
    if (!(tau_v > 0.0 && tau_v < 2.0)) throw ValidationError("CascadeConfig: tau_v must be in (0, 2)");
    if (min_tracked < 0) throw ValidationError("CascadeConfig: min_tracked must be nonnegative");
    if (!(rate_video > 0.0)) throw ValidationError("CascadeConfig: rate_video must be positive");
}

double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0)) {
        throw ValidationError("cosine_distance: zero-norm input");
    }
    return 1.0 - a.dot(b) / (na * nb);
}

CascadeResult run_cascade(std::span<const FrameStamp> frames, const ImuSequence& imu,
                          const CascadeConfig& cfg, const ParallaxProvider& parallax_provider,
                          const TokenProvider& token_provider, const Mat3& R0, const Vec3& v0) {
    cfg.validate();
    if (frames.empty()) throw ValidationError("run_cascade: empty frame stream");
    if (imu.samples.empty()) throw ValidationError("run_cascade: empty IMU sequence");
    if (imu.samples.front().t > frames.front().t + 1e-9) {
        throw ValidationError("run_cascade: IMU stream starts after the first frame");
    }

    CascadeResult result;
    StageStats& stats = result.stats;
    stats.n_frames = static_cast<std::int64_t>(frames.size());

    ImuCursor cursor(imu, make_nav_state(R0, v0, Vec3::Zero(), frames.front().t));
    cursor.set_gravity(cfg.gravity);

    auto segment_end = [&](double t) {
        return static_cast<std::size_t>(
            std::upper_bound(imu.samples.begin(), imu.samples.end(), t + 1e-12,
                             [](double value, const ImuSample& s) { return value < s.t; }) -
            imu.samples.begin());
    };

    // Frame 0 is always kept; its token is the first extraction.
    FrameStamp ref_frame = frames.front();
    Eigen::VectorXd ref_token = token_provider(ref_frame);
    ++stats.n_token_extractions;
    NavState ref_state = cursor.state();

    KeyframeRecord first;
    first.frame_index = ref_frame.index;
    first.t = ref_frame.t;
    first.visual_token = ref_token;
    first.imu_begin = first.imu_end = segment_end(ref_frame.t);
    result.keyframes.push_back(std::move(first));

    for (std::size_t i = 1; i < frames.size(); ++i) {
        const FrameStamp& frame = frames[i];
        if (!(frame.t > frames[i - 1].t)) {
            throw ValidationError("run_cascade: frame timestamps must be strictly increasing");
        }

        const auto t1_start = Clock::now();
        cursor.advance_to(frame.t, frame.index);
        const RelativeMotion rel = relative_motion(ref_state, cursor.state());
        const double theta = rotation_angle(rel.delta_R);
        stats.wall_time_stage1 += seconds_since(t1_start);
        if (rel.distance < cfg.tau_d && theta < cfg.tau_theta) continue;
        ++stats.n_pass_stage1;

        const auto t2_start = Clock::now();
        const Parallax parallax = parallax_provider(ref_frame, frame);
        stats.wall_time_stage2 += seconds_since(t2_start);
        // A lost track set (too few shared landmarks) signals a major view
        // change, so it passes rather than blocks.
        const bool tracked = parallax.defined && parallax.n_tracked >= cfg.min_tracked;
        if (tracked && parallax.mean_px < cfg.tau_p) continue;
        ++stats.n_pass_stage2;

        const auto t3_start = Clock::now();
        Eigen::VectorXd token = token_provider(frame);
        ++stats.n_token_extractions;
        const bool comparable = ref_token.norm() > 0.0 && token.norm() > 0.0;
        const double distance = comparable ? cosine_distance(token, ref_token) : 2.0;
        stats.wall_time_stage3 += seconds_since(t3_start);
        if (distance < cfg.tau_v) continue;

        ++stats.n_keyframes;
        KeyframeRecord rec;
        rec.frame_index = frame.index;
        rec.t = frame.t;
        rec.visual_token = token;
        rec.imu_begin = result.keyframes.back().imu_end;
        rec.imu_end = segment_end(frame.t);
        result.keyframes.push_back(std::move(rec));

        ref_frame = frame;
        ref_token = result.keyframes.back().visual_token;
        ref_state = cursor.state();
    }
    return result;
}

}  // namespace ego
