#include "ego/scene.hpp"

#include <algorithm>
#include <cmath>

#include "ego/errors.hpp"
#include "ego/rng.hpp"

namespace ego {

namespace {

constexpr double kFps = 30.0;
constexpr std::uint64_t kTokenDirectionSeed = 0x7000E17D1ull;

// Camera convention: z forward, x right, y down; world z is up.
Mat3 look_rotation(double yaw, double pitch) {
    const Vec3 forward(std::cos(yaw) * std::cos(pitch), std::sin(yaw) * std::cos(pitch),
                       std::sin(pitch));
    const Vec3 up(0.0, 0.0, 1.0);
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);
    Mat3 r;
    r.col(0) = right;
    r.col(1) = down;
    r.col(2) = forward;
    return r;
}

// Piecewise speed factor in [0, 1]: pauses and cruises joined by quintic
// ramps, so the profile and its first two derivatives are continuous.
class SpeedProfile {
public:
    SpeedProfile(const CounterRng& rng, std::uint64_t stream, double duration) {
        double t = 0.0;
        std::uint64_t k = 0;
        boundaries_.push_back({t, 0.0, Kind::pause});
        // Lead-in pause so scans start at rest.
        t += 1.0 + 0.8 * rng.uniform(stream, k++);
        while (t < duration) {
            const double ramp = 0.8;
            const double cruise = 2.2 + 3.0 * rng.uniform(stream, k++);
            const double pause = 0.8 + 1.4 * rng.uniform(stream, k++);
            boundaries_.push_back({t, ramp, Kind::ramp_up});
            t += ramp;
            boundaries_.push_back({t, cruise, Kind::cruise});
            t += cruise;
            boundaries_.push_back({t, ramp, Kind::ramp_down});
            t += ramp;
            boundaries_.push_back({t, pause, Kind::pause});
            t += pause;
        }
    }

    double value(double t) const {
        const Piece& p = piece_at(t);
        const double x = (t - p.t0) / p.len;
        switch (p.kind) {
            case Kind::pause: return 0.0;
            case Kind::cruise: return 1.0;
            case Kind::ramp_up: return smoothstep5(x);
            case Kind::ramp_down: return smoothstep5(1.0 - x);
        }
        return 0.0;
    }

    // Integral of value() from 0 to t, in seconds of equivalent cruise time.
    double integral(double t) const {
        double acc = 0.0;
        for (const Piece& p : boundaries_) {
            if (t <= p.t0) break;
            const double upto = std::min(t, p.t0 + p.len);
            const double x = (upto - p.t0) / p.len;
            switch (p.kind) {
                case Kind::pause: break;
                case Kind::cruise: acc += upto - p.t0; break;
                case Kind::ramp_up: acc += p.len * smoothstep5_integral(x); break;
                case Kind::ramp_down:
                    acc += p.len * (0.5 - smoothstep5_integral(1.0 - x));
                    break;
            }
        }
        return acc;
    }

private:
    enum class Kind { pause, ramp_up, cruise, ramp_down };
    struct Piece {
        double t0;
        double len;
        Kind kind;
    };

    const Piece& piece_at(double t) const {
        for (std::size_t i = boundaries_.size(); i-- > 0;) {
            if (t >= boundaries_[i].t0) return boundaries_[i];
        }
        return boundaries_.front();
    }

    std::vector<Piece> boundaries_;
};

// Scalar track of held values joined by quintic slews with a rate limit.
// Slews never overlap: a new target scheduled inside a running slew starts
// when that slew ends.
class SlewTrack {
public:
    SlewTrack() = default;

    void add_target(double t_start, double target, double max_rate) {
        const double begin = std::max(t_start, end_time_);
        const double from = value_end_;
        const double dur = std::max(0.8, std::abs(target - from) / max_rate);
        segments_.push_back({begin, dur, from, target});
        end_time_ = begin + dur;
        value_end_ = target;
    }

    double value(double t) const {
        double v = initial_;
        for (const auto& s : segments_) {
            if (t <= s.t0) break;
            if (t >= s.t0 + s.len) {
                v = s.to;
            } else {
                v = s.from + (s.to - s.from) * smoothstep5((t - s.t0) / s.len);
            }
        }
        return v;
    }

    void set_initial(double v) {
        initial_ = v;
        value_end_ = v;
    }

    double last_target() const { return value_end_; }
    double end_time() const { return end_time_; }

private:
    struct Segment {
        double t0;
        double len;
        double from;
        double to;
    };
    std::vector<Segment> segments_;
    double initial_ = 0.0;
    double value_end_ = 0.0;
    double end_time_ = 0.0;
};

struct StyleParams {
    double cruise_speed;
    double gaze_hold_min, gaze_hold_span;   // seconds between gaze retargets
    double gaze_amplitude;                  // radians, offset from the base direction
    double gaze_rate;                       // rad/s slew limit
};

StyleParams style_params(ScanStyle style) {
    switch (style) {
        case ScanStyle::orbit: return {0.26, 3.5, 3.0, deg2rad(35.0), deg2rad(22.0)};
        case ScanStyle::sweep: return {0.16, 2.0, 2.0, deg2rad(75.0), deg2rad(26.0)};
        case ScanStyle::walkthrough: return {0.27, 3.0, 3.5, deg2rad(40.0), deg2rad(24.0)};
    }
    throw ValidationError("unknown scan style");
}

}  // namespace

ScanStyle parse_scan_style(const std::string& name) {
    if (name == "orbit") return ScanStyle::orbit;
    if (name == "sweep") return ScanStyle::sweep;
    if (name == "walkthrough") return ScanStyle::walkthrough;
    throw ValidationError("unknown scan style '" + name + "'");
}

std::string to_string(ScanStyle style) {
    switch (style) {
        case ScanStyle::orbit: return "orbit";
        case ScanStyle::sweep: return "sweep";
        case ScanStyle::walkthrough: return "walkthrough";
    }
    return "?";
}

SceneModel generate_scene(std::uint64_t seed, int n_landmarks, const Vec3& room_min,
                          const Vec3& room_max) {
    if (n_landmarks < 50) throw ValidationError("generate_scene: need at least 50 landmarks");
    const Vec3 ext = room_max - room_min;
    if (!(ext.x() > 0.0 && ext.y() > 0.0 && ext.z() > 0.0)) {
        throw ValidationError("generate_scene: degenerate room box");
    }

    SceneModel scene;
    scene.room_min = room_min;
    scene.room_max = room_max;
    scene.landmarks.reserve(n_landmarks);

    // Area-weighted choice among the six faces, then uniform in-face.
    const double areas[3] = {ext.y() * ext.z(), ext.x() * ext.z(), ext.x() * ext.y()};
    const double total = 2.0 * (areas[0] + areas[1] + areas[2]);

    const CounterRng rng(seed);
    static constexpr auto kStream = CounterRng::stream("scene-landmarks");
    for (int i = 0; i < n_landmarks; ++i) {
        const double pick = rng.uniform(kStream, 4 * i) * total;
        double acc = 0.0;
        int axis = 0;
        bool high = false;
        for (int a = 0; a < 3 && acc <= pick; ++a) {
            for (int side = 0; side < 2; ++side) {
                acc += areas[a];
                if (acc > pick) {
                    axis = a;
                    high = side == 1;
                    break;
                }
            }
        }
        Vec3 p;
        p[axis] = high ? room_max[axis] : room_min[axis];
        const int u_axis = (axis + 1) % 3;
        const int v_axis = (axis + 2) % 3;
        p[u_axis] = room_min[u_axis] + ext[u_axis] * rng.uniform(kStream, 4 * i + 1);
        p[v_axis] = room_min[v_axis] + ext[v_axis] * rng.uniform(kStream, 4 * i + 2);
        scene.landmarks.push_back({i, p});
    }
    return scene;
}

std::vector<PoseSample> generate_scan_trajectory(std::uint64_t seed, ScanStyle style,
                                                 double duration, const Vec3& room_min,
                                                 const Vec3& room_max) {
    if (!(duration >= 10.0 && duration <= 120.0)) {
        throw ValidationError("generate_scan_trajectory: duration must be in [10, 120] s");
    }
    const Vec3 ext = room_max - room_min;
    if (!(ext.x() > 1.0 && ext.y() > 1.0 && ext.z() > 0.5)) {
        throw ValidationError("generate_scan_trajectory: room too small");
    }

    const StyleParams prm = style_params(style);
    const CounterRng rng(seed);
    static constexpr auto kPath = CounterRng::stream("traj-path");
    static constexpr auto kSpeed = CounterRng::stream("traj-speed");
    static constexpr auto kGaze = CounterRng::stream("traj-gaze");
    static constexpr auto kPitch = CounterRng::stream("traj-pitch");

    const Vec3 center = 0.5 * (room_min + room_max);
    const double margin = 0.8;
    const double ax = std::max(0.3, 0.5 * ext.x() - margin);
    const double ay = std::max(0.3, 0.5 * ext.y() - margin);
    const double eye_z = std::clamp(room_min.z() + 1.4, room_min.z() + 0.3, room_max.z() - 0.3);
    const double bob_amp = 0.05;
    const double bob_period = 6.0 + 2.0 * rng.uniform(kPath, 0);

    const double phase1 = 2.0 * M_PI * rng.uniform(kPath, 1);
    const double phase2 = 2.0 * M_PI * rng.uniform(kPath, 2);

    // Horizontal path and its tangent as functions of the path parameter.
    auto path_xy = [&](double s, Vec2& pos, Vec2& tangent) {
        pos.setZero();
        tangent.setZero();
        switch (style) {
            case ScanStyle::walkthrough: {
                pos = Vec2(ax * std::sin(2.0 * M_PI * s + phase1),
                           ay * std::sin(4.0 * M_PI * s + phase2));
                tangent = Vec2(ax * 2.0 * M_PI * std::cos(2.0 * M_PI * s + phase1),
                               ay * 4.0 * M_PI * std::cos(4.0 * M_PI * s + phase2));
                break;
            }
            case ScanStyle::orbit: {
                const double r = 0.75;
                pos = Vec2(r * ax * std::cos(2.0 * M_PI * s + phase1),
                           r * ay * std::sin(2.0 * M_PI * s + phase1));
                tangent = Vec2(-r * ax * 2.0 * M_PI * std::sin(2.0 * M_PI * s + phase1),
                               r * ay * 2.0 * M_PI * std::cos(2.0 * M_PI * s + phase1));
                break;
            }
            case ScanStyle::sweep: {
                const Vec2 dir(std::cos(phase1), std::sin(phase1));
                const double amp = 0.8 * std::min(ax, ay);
                pos = amp * std::sin(2.0 * M_PI * s) * dir;
                tangent = amp * 2.0 * M_PI * std::cos(2.0 * M_PI * s) * dir;
                break;
            }
        }
    };

    const SpeedProfile speed(rng, kSpeed, duration);

    // March the path parameter so physical speed tracks cruise * profile.
    const int n = static_cast<int>(std::llround(duration * kFps));
    const int substeps = 10;
    const double h = 1.0 / (kFps * substeps);
    std::vector<double> s_at_frame(n);
    std::vector<double> heading_at_frame(n);
    const double tangent_floor = 0.2 * 2.0 * M_PI * std::min(ax, ay);
    {
        double s = 0.0;
        double heading = 0.0;
        Vec2 pos, tan;
        path_xy(0.0, pos, tan);
        if (tan.norm() > 1e-9) heading = std::atan2(tan.y(), tan.x());
        for (int k = 0; k < n; ++k) {
            s_at_frame[k] = s;
            path_xy(s, pos, tan);
            if (tan.norm() > 1e-6) heading = std::atan2(tan.y(), tan.x());
            heading_at_frame[k] = heading;
            for (int j = 0; j < substeps; ++j) {
                const double t = k / kFps + j * h;
                const double v = prm.cruise_speed * speed.value(t);
                path_xy(s, pos, tan);
                const double denom = std::max(tan.norm(), tangent_floor);
                s += h * v / denom;
            }
        }
    }

    // Gaze: retarget every few seconds toward the travel heading (or, for
    // sweeps, around the base direction) with a seeded offset.
    SlewTrack yaw;
    SlewTrack pitch;
    {
        const double base = style == ScanStyle::sweep
                                ? phase1 + M_PI / 2.0
                                : heading_at_frame.front();
        yaw.set_initial(base + prm.gaze_amplitude * (2.0 * rng.uniform(kGaze, 0) - 1.0));
        pitch.set_initial(deg2rad(-4.0));
        double t = 1.2 + 2.0 * rng.uniform(kGaze, 1);
        std::uint64_t k = 2;
        while (t < duration) {
            const int frame = std::min(n - 1, static_cast<int>(t * kFps));
            const double anchor =
                style == ScanStyle::sweep ? phase1 + M_PI / 2.0 : heading_at_frame[frame];
            double target = anchor + prm.gaze_amplitude * (2.0 * rng.uniform(kGaze, k++) - 1.0);
            // Unwrap so the slew takes the short way around.
            const double cur = yaw.last_target();
            while (target - cur > M_PI) target -= 2.0 * M_PI;
            while (target - cur < -M_PI) target += 2.0 * M_PI;
            yaw.add_target(t, target, prm.gaze_rate);
            pitch.add_target(t, deg2rad(-10.0 + 12.0 * rng.uniform(kPitch, k)), deg2rad(7.0));
            const double hold = prm.gaze_hold_min + prm.gaze_hold_span * rng.uniform(kGaze, k++);
            t = std::max(t + hold, yaw.end_time() + 0.3);
        }
    }

    std::vector<PoseSample> out(n);
    Quat prev_q = Quat::Identity();
    for (int k = 0; k < n; ++k) {
        const double t = k / kFps;
        Vec2 pos, tan;
        path_xy(s_at_frame[k], pos, tan);
        PoseSample& ps = out[k];
        ps.t = t;
        // Vertical bob follows the speed profile so pauses hold still.
        const double bob = bob_amp * speed.value(t) * std::sin(2.0 * M_PI * t / bob_period);
        ps.p = Vec3(center.x() + pos.x(), center.y() + pos.y(), eye_z + bob);
        Quat q(look_rotation(yaw.value(t), pitch.value(t)));
        q.normalize();
        if (k > 0 && q.dot(prev_q) < 0.0) q.coeffs() *= -1.0;
        ps.q = q;
        prev_q = q;
    }
    return out;
}

FrameObservation observe(const SceneModel& scene, const PoseSample& pose, int frame_index) {
    FrameObservation obs;
    obs.frame_index = frame_index;
    obs.t = pose.t;
    const Mat3 r_wb = pose.q.toRotationMatrix();
    const auto& in = scene.intrinsics;
    for (const auto& lm : scene.landmarks) {
        if (static_cast<int>(obs.pixels.size()) >= scene.max_landmarks_per_frame) break;
        const Vec3 pc = r_wb.transpose() * (lm.p - pose.p);
        if (pc.z() < scene.min_depth || pc.z() > scene.max_depth) continue;
        const double u = in.fx * pc.x() / pc.z() + in.cx;
        const double v = in.fy * pc.y() / pc.z() + in.cy;
        if (u < 0.0 || u >= in.width || v < 0.0 || v >= in.height) continue;
        obs.pixels.emplace(lm.id, Vec2(u, v));
    }
    return obs;
}

Parallax average_parallax(const FrameObservation& at_keyframe, const FrameObservation& candidate) {
    Parallax out;
    double sum = 0.0;
    for (const auto& [id, px] : at_keyframe.pixels) {
        const auto it = candidate.pixels.find(id);
        if (it == candidate.pixels.end()) continue;
        sum += (it->second - px).norm();
        ++out.n_tracked;
    }
    if (out.n_tracked > 0) {
        out.mean_px = sum / out.n_tracked;
        out.defined = true;
    }
    return out;
}

VisualToken visual_token(const SceneModel& scene, const PoseSample& pose, int dim) {
    if (dim < 16) throw ValidationError("visual_token: dim must be >= 16");
    VisualToken token;
    token.embedding = Eigen::VectorXd::Zero(dim);

    const CounterRng rng(kTokenDirectionSeed);
    static constexpr auto kDir = CounterRng::stream("landmark-direction");
    const Mat3 r_wb = pose.q.toRotationMatrix();
    const auto& in = scene.intrinsics;

    int used = 0;
    for (const auto& lm : scene.landmarks) {
        if (used >= scene.max_landmarks_per_frame) break;
        const Vec3 pc = r_wb.transpose() * (lm.p - pose.p);
        if (pc.z() < scene.min_depth || pc.z() > scene.max_depth) continue;
        const double u = in.fx * pc.x() / pc.z() + in.cx;
        const double v = in.fy * pc.y() / pc.z() + in.cy;
        if (u < 0.0 || u >= in.width || v < 0.0 || v >= in.height) continue;
        ++used;

        const double range = pc.norm();
        const double cos_view = pc.z() / range;
        const double weight =
            std::pow(cos_view, scene.token_sharpness) / std::max(range, scene.min_depth);

        // The direction depends on the id plus the quantized viewing range
        // and world-frame bearing, so translation re-bins landmarks and
        // moves the token the way a geometry-aware feature would, while
        // pure rotation only shifts the foreshortening weights.
        const auto depth_bin = static_cast<std::int64_t>(
            std::floor(std::log(range) / std::log1p(scene.token_depth_resolution)));
        const Vec3 bearing = (pose.p - lm.p) / range;
        const auto az_bin = static_cast<std::int64_t>(
            std::floor(std::atan2(bearing.y(), bearing.x()) / scene.token_bearing_resolution));
        const auto el_bin = static_cast<std::int64_t>(
            std::floor(std::asin(std::clamp(bearing.z(), -1.0, 1.0)) /
                       scene.token_bearing_resolution));
        Eigen::VectorXd dir(dim);
        const std::uint64_t stream =
            kDir ^ (0x9E3779B97F4A7C15ull * (lm.id + 1)) ^
            (0xC2B2AE3D27D4EB4Full * static_cast<std::uint64_t>(depth_bin + 4096)) ^
            (0x165667B19E3779F9ull * static_cast<std::uint64_t>(az_bin + 4096)) ^
            (0x27D4EB2F165667C5ull * static_cast<std::uint64_t>(el_bin + 4096));
        for (int c = 0; c < dim; ++c) dir[c] = rng.normal(stream, c);
        token.embedding += weight * dir.normalized();
    }
    if (used == 0) return token;
    token.has_landmarks = true;
    token.embedding.normalize();
    return token;
}

}  // namespace ego
