#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ego/math.hpp"
#include "ego/trajectory.hpp"

namespace ego {

struct PinholeIntrinsics {
    double fx = 600.0;
    double fy = 600.0;
    double cx = 320.0;
    double cy = 240.0;
    int width = 640;
    int height = 480;
};

// Synthetic indoor scene: point landmarks on the room box surfaces plus the
// camera model used to observe them. Immutable once generated.
struct SceneModel {
    struct Landmark {
        int id;
        Vec3 p;
    };

    std::vector<Landmark> landmarks;
    Vec3 room_min = Vec3::Zero();
    Vec3 room_max = Vec3(6.0, 5.0, 3.0);
    PinholeIntrinsics intrinsics;

    double min_depth = 0.3;              // meters, visibility range
    double max_depth = 8.0;
    int max_landmarks_per_frame = 200;   // per-frame cap, lowest ids win
    double token_sharpness = 2.0;        // view-angle falloff exponent for tokens
    double token_depth_resolution = 0.08;   // relative range-bin width for tokens
    double token_bearing_resolution = 0.12;  // radians, world-bearing bin width
};

// Landmarks visible from one camera pose, keyed by landmark id.
struct FrameObservation {
    int frame_index = 0;
    double t = 0.0;
    std::map<int, Vec2> pixels;
};

struct Parallax {
    double mean_px = 0.0;
    int n_tracked = 0;
    bool defined = false;  // false when no landmark is shared
};

struct VisualToken {
    Eigen::VectorXd embedding;
    bool has_landmarks = false;
};

enum class ScanStyle { orbit, sweep, walkthrough };

ScanStyle parse_scan_style(const std::string& name);
std::string to_string(ScanStyle style);

// Landmarks uniform over the box faces (area-weighted), deterministic per
// seed. Requires n_landmarks >= 50 and a box with positive extent.
SceneModel generate_scene(std::uint64_t seed, int n_landmarks,
                          const Vec3& room_min = Vec3::Zero(),
                          const Vec3& room_max = Vec3(6.0, 5.0, 3.0));

// Smooth handheld-style scan at 30 samples/s: cruise speeds around
// 0.1-0.6 m/s separated by pauses, gaze sweeps toward the walls, start at
// rest. duration must lie in [10, 120] s.
std::vector<PoseSample> generate_scan_trajectory(std::uint64_t seed, ScanStyle style,
                                                 double duration,
                                                 const Vec3& room_min = Vec3::Zero(),
                                                 const Vec3& room_max = Vec3(6.0, 5.0, 3.0));

// Pinhole projection of every landmark with depth in [min_depth, max_depth]
// that lands inside the image, capped at max_landmarks_per_frame.
FrameObservation observe(const SceneModel& scene, const PoseSample& pose, int frame_index);

// Mean pixel displacement over landmarks present in both observations.
Parallax average_parallax(const FrameObservation& at_keyframe, const FrameObservation& candidate);

// Deterministic unit-norm embedding standing in for a fused 2D+geometry
// token: every visible landmark hashes to a fixed direction in R^dim from
// its id and its quantized viewing range (so translation re-bins landmarks
// and moves the token), weighted by foreshortening and inverse depth.
// dim must be >= 16; has_landmarks is false when nothing is visible.
VisualToken visual_token(const SceneModel& scene, const PoseSample& pose, int dim);

}  // namespace ego
