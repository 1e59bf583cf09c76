#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ego/cascade.hpp"
#include "ego/imu.hpp"
#include "ego/scene.hpp"
#include "ego/trajectory.hpp"

namespace ego {

// Pose CSV: header "t,px,py,pz,qw,qx,qy,qz", SI units, one row per sample.
std::vector<PoseSample> read_pose_csv(const std::string& path);
void write_pose_csv(const std::string& path, const std::vector<PoseSample>& samples);

// IMU CSV: header "t,wx,wy,wz,ax,ay,az" (seconds, rad/s, m/s^2).
ImuSequence read_imu_csv(const std::string& path);
void write_imu_csv(const std::string& path, const ImuSequence& seq);

// Keyframe CSV: header "frame_index,t".
void write_keyframe_csv(const std::string& path, const std::vector<KeyframeRecord>& records);

nlohmann::json scene_to_json(const SceneModel& scene);
SceneModel scene_from_json(const nlohmann::json& j);
void save_scene(const std::string& path, const SceneModel& scene);
SceneModel load_scene(const std::string& path);

// Stats JSON mirrors the StageStats field names. Wall times are reported
// only when include_timing is set, keeping default outputs byte-stable.
nlohmann::json stats_to_json(const StageStats& stats, bool include_timing);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

// Shortest round-trip formatting used for all numeric file output.
std::string format_double(double value);

}  // namespace ego
