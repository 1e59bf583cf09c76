#pragma once

#include <cstdint>
#include <string>

#include "ego/cascade.hpp"
#include "ego/fusion.hpp"
#include "ego/imu.hpp"
#include "ego/scene.hpp"

namespace ego {

inline constexpr const char* kVersion = "0.1.0";

struct SceneRunConfig {
    std::uint64_t seed = 1;
    ScanStyle style = ScanStyle::walkthrough;
    double duration = 30.0;
    int n_landmarks = 500;
    Vec3 room_min = Vec3::Zero();
    Vec3 room_max = Vec3(6.0, 5.0, 3.0);
    int token_dim = 256;
    double token_sharpness = 2.0;
    double token_depth_resolution = 0.08;
    double token_bearing_resolution = 0.12;
    int max_landmarks_per_frame = 200;
};

// One flat key=value file with [section] headers covers every module knob.
// Unknown sections or keys are rejected; every field has the documented
// default, so an empty file is a valid config.
struct RunConfig {
    double knot_dt = 0.1;       // [trajectory]
    double imu_rate = 200.0;    // [imu]
    NoiseModel noise;           // [noise]
    CascadeConfig cascade;      // [cascade]
    SceneRunConfig scene;       // [scene]
    FusionDims fusion;          // [fusion]
    std::string out_dir = ".";  // [output]
};

RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
RunConfig parse_config_file(const std::string& path);

// Canonical serialization: fixed section/key order, round-trip numbers.
// Semantically identical configs produce identical dumps.
std::string canonical_dump(const RunConfig& config);

// FNV-1a over the canonical dump, as a fixed-width hex string.
std::string config_hash(const RunConfig& config);

}  // namespace ego
