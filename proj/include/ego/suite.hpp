#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ego/cascade.hpp"
#include "ego/config.hpp"
#include "ego/imu.hpp"
#include "ego/scene.hpp"
#include "ego/trajectory.hpp"

namespace ego {

// One synthetic scan: everything derives deterministically from the seed.
// noise_scale multiplies the configured noise densities (0 = ideal IMU).
struct Scenario {
    std::string name;
    std::uint64_t seed = 1;
    ScanStyle style = ScanStyle::walkthrough;
    double duration = 30.0;
    double noise_scale = 1.0;
};

std::vector<Scenario> load_suite(const std::string& path);

// Fully prepared inputs for cascade runs: scene, poses, fitted spline, noisy
// IMU, frame stamps and memoized providers.
struct ScenarioData {
    Scenario scenario;
    SceneModel scene;
    std::vector<PoseSample> poses;
    SplineTrajectory spline;
    ImuSequence imu_ideal;
    ImuSequence imu;
    std::vector<FrameStamp> frames;
    Mat3 R0 = Mat3::Identity();

    ParallaxProvider parallax_provider;
    TokenProvider token_provider;
};

ScenarioData prepare_scenario(const Scenario& scenario, const RunConfig& config);

// Builds memoizing providers over a scene + pose list. The observation and
// token caches are shared across runs so sweeps do not pay re-projection;
// values are pure functions of the pose so results are unchanged.
void make_providers(const SceneModel& scene, const std::vector<PoseSample>& poses, int token_dim,
                    ParallaxProvider& parallax, TokenProvider& token);

CascadeResult run_scenario(const ScenarioData& data, const CascadeConfig& cfg);

// Evenly spaced frame selection; the baseline the cascade is compared with.
std::vector<int> uniform_sample_indices(int n_frames, int n_select);

// Displacement error of gravity-corrected double integration over short
// windows, starting from the true state at each window start.
struct DriftReport {
    double horizon = 1.0;
    int n_seeds = 0;
    int n_windows = 0;
    double median_m = 0.0;
    double mean_m = 0.0;
    double p90_m = 0.0;
};
DriftReport drift_characterization(const SplineTrajectory& spline, const WorldFrame& frame,
                                   const NoiseModel& noise, double rate, int n_seeds,
                                   double horizon = 1.0);

nlohmann::json run_bench(const std::vector<Scenario>& suite, const RunConfig& config,
                         const std::vector<int>& uniform_counts, int drift_seeds);
std::string bench_text_table(const nlohmann::json& bench);

// Threshold sensitivity: each of tau_d/tau_theta/tau_p/tau_v perturbed
// independently by each delta fraction, cascade re-run per scenario.
nlohmann::json run_sweep(const std::vector<Scenario>& suite, const RunConfig& config,
                         const std::vector<double>& deltas);

}  // namespace ego
