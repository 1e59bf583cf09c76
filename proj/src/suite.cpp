#include "ego/suite.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "ego/errors.hpp"
#include "ego/io.hpp"
#include "ego/preintegration.hpp"

namespace ego {

namespace {

double percentile(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double idx = q * (values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(idx);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double w = idx - lo;
    return values[lo] * (1.0 - w) + values[hi] * w;
}

}  // namespace

std::vector<Scenario> load_suite(const std::string& path) {
    const nlohmann::json j = read_json(path);
    std::vector<Scenario> suite;
    try {
        for (const auto& js : j.at("scenarios")) {
            Scenario s;
            s.name = js.at("name").get<std::string>();
            s.seed = js.at("seed").get<std::uint64_t>();
            s.style = parse_scan_style(js.at("style").get<std::string>());
            s.duration = js.at("duration").get<double>();
            s.noise_scale = js.value("noise_scale", 1.0);
            suite.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ": bad suite manifest: " + e.what());
    }
    if (suite.empty()) throw ValidationError(path + ": suite manifest lists no scenarios");
    return suite;
}

void make_providers(const SceneModel& scene, const std::vector<PoseSample>& poses, int token_dim,
                    ParallaxProvider& parallax, TokenProvider& token) {
    auto obs_cache = std::make_shared<std::map<int, FrameObservation>>();
    auto token_cache = std::make_shared<std::map<int, Eigen::VectorXd>>();
    const SceneModel* scene_ptr = &scene;
    const std::vector<PoseSample>* poses_ptr = &poses;

    auto observation = [obs_cache, scene_ptr, poses_ptr](const FrameStamp& f) -> const FrameObservation& {
        auto it = obs_cache->find(f.index);
        if (it == obs_cache->end()) {
            it = obs_cache->emplace(f.index, observe(*scene_ptr, (*poses_ptr)[f.index], f.index))
                     .first;
        }
        return it->second;
    };

    parallax = [observation](const FrameStamp& kf, const FrameStamp& cand) {
        return average_parallax(observation(kf), observation(cand));
    };
    token = [token_cache, scene_ptr, poses_ptr, token_dim](const FrameStamp& f) {
        auto it = token_cache->find(f.index);
        if (it == token_cache->end()) {
            const VisualToken vt = visual_token(*scene_ptr, (*poses_ptr)[f.index], token_dim);
            it = token_cache->emplace(f.index, vt.embedding).first;
        }
        return it->second;
    };
}

ScenarioData prepare_scenario(const Scenario& scenario, const RunConfig& config) {
    ScenarioData data;
    data.scenario = scenario;
    data.scene = generate_scene(scenario.seed, config.scene.n_landmarks, config.scene.room_min,
                                config.scene.room_max);
    data.scene.token_sharpness = config.scene.token_sharpness;
    data.scene.token_depth_resolution = config.scene.token_depth_resolution;
    data.scene.token_bearing_resolution = config.scene.token_bearing_resolution;
    data.scene.max_landmarks_per_frame = config.scene.max_landmarks_per_frame;
    data.poses = generate_scan_trajectory(scenario.seed, scenario.style, scenario.duration,
                                          config.scene.room_min, config.scene.room_max);
    data.spline = fit_spline(data.poses, config.knot_dt);

    WorldFrame frame;
    frame.gravity = config.cascade.gravity;
    frame.R0 = data.poses.front().q.toRotationMatrix();
    data.R0 = frame.R0;

    data.imu_ideal = synthesize_ideal(data.spline, frame, config.imu_rate);
    NoiseModel noise = config.noise.scaled(scenario.noise_scale);
    noise.seed = config.noise.seed ^ (scenario.seed * 0x9E3779B97F4A7C15ull);
    data.imu = apply_noise(data.imu_ideal, noise);

    data.frames.resize(data.poses.size());
    for (std::size_t i = 0; i < data.poses.size(); ++i) {
        data.frames[i] = {static_cast<int>(i), data.poses[i].t};
    }
    make_providers(data.scene, data.poses, config.scene.token_dim, data.parallax_provider,
                   data.token_provider);
    return data;
}

CascadeResult run_scenario(const ScenarioData& data, const CascadeConfig& cfg) {
    return run_cascade(data.frames, data.imu, cfg, data.parallax_provider, data.token_provider,
                       data.R0, Vec3::Zero());
}

std::vector<int> uniform_sample_indices(int n_frames, int n_select) {
    if (n_select <= 0 || n_frames <= 0) return {};
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(n_select));
    if (n_select == 1) return {0};
    if (n_select >= n_frames) {
        out.resize(static_cast<std::size_t>(n_frames));
        for (int i = 0; i < n_frames; ++i) out[static_cast<std::size_t>(i)] = i;
        return out;
    }
    int prev = -1;
    for (int k = 0; k < n_select; ++k) {
        int idx = static_cast<int>(
            std::llround(static_cast<double>(k) * (n_frames - 1) / (n_select - 1)));
        if (idx <= prev) idx = prev + 1;
        out.push_back(idx);
        prev = idx;
    }
    return out;
}

DriftReport drift_characterization(const SplineTrajectory& spline, const WorldFrame& frame,
                                   const NoiseModel& noise, double rate, int n_seeds,
                                   double horizon) {
    const ImuSequence ideal = synthesize_ideal(spline, frame, rate);
    std::vector<double> errors;

    for (int s = 0; s < n_seeds; ++s) {
        NoiseModel model = noise;
        model.seed = noise.seed + static_cast<std::uint64_t>(s) + 1;
        const ImuSequence noisy = apply_noise(ideal, model);

        for (double t0 = spline.t_start(); t0 + horizon <= spline.t_end() + 1e-9; t0 += horizon) {
            const auto begin = std::lower_bound(
                noisy.samples.begin(), noisy.samples.end(), t0,
                [](const ImuSample& smp, double value) { return smp.t < value; });
            const auto end = std::upper_bound(
                noisy.samples.begin(), noisy.samples.end(), t0 + horizon,
                [](double value, const ImuSample& smp) { return value < smp.t; });
            if (begin == end) continue;

            NavState state = make_nav_state(spline.rotation(t0), spline.velocity(t0),
                                            spline.position(t0), t0);
            state = integrate_sequence(
                state, std::span<const ImuSample>(&*begin, static_cast<std::size_t>(end - begin)),
                frame.gravity);
            errors.push_back((state.p - spline.position(state.t)).norm());
        }
    }

    DriftReport report;
    report.horizon = horizon;
    report.n_seeds = n_seeds;
    report.n_windows = static_cast<int>(errors.size());
    report.median_m = percentile(errors, 0.5);
    report.mean_m = errors.empty()
                        ? 0.0
                        : std::accumulate(errors.begin(), errors.end(), 0.0) / errors.size();
    report.p90_m = percentile(errors, 0.9);
    return report;
}

nlohmann::json run_bench(const std::vector<Scenario>& suite, const RunConfig& config,
                         const std::vector<int>& uniform_counts, int drift_seeds) {
    if (suite.empty()) throw ValidationError("run_bench: empty scenario suite");

    nlohmann::json out;
    out["version"] = kVersion;
    out["config_hash"] = config_hash(config);
    nlohmann::json rows = nlohmann::json::array();

    bool drift_done = false;
    for (const Scenario& sc : suite) {
        const ScenarioData data = prepare_scenario(sc, config);
        const CascadeResult res = run_scenario(data, config.cascade);

        nlohmann::json row;
        row["scenario"] = sc.name;
        row["style"] = to_string(sc.style);
        row["noise_scale"] = sc.noise_scale;
        row["n_frames"] = data.frames.size();
        row["cascade"] = {{"keyframes", res.keyframes.size()},
                          {"stats", stats_to_json(res.stats, false)},
                          {"token_fraction",
                           static_cast<double>(res.stats.n_token_extractions) /
                               static_cast<double>(res.stats.n_frames)},
                          {"stage1_retention",
                           static_cast<double>(res.stats.n_pass_stage1) /
                               static_cast<double>(res.stats.n_frames)}};
        nlohmann::json uni = nlohmann::json::object();
        for (int n : uniform_counts) {
            const auto idx = uniform_sample_indices(static_cast<int>(data.frames.size()), n);
            uni[std::to_string(n)] = {{"frames", idx.size()},
                                      {"token_extractions", idx.size()}};
        }
        row["uniform"] = uni;
        rows.push_back(std::move(row));

        if (!drift_done && drift_seeds > 0) {
            WorldFrame frame;
            frame.gravity = config.cascade.gravity;
            frame.R0 = data.R0;
            // Drift is characterized under the full configured noise model,
            // independent of the scenario's noise_scale.
            const DriftReport drift = drift_characterization(data.spline, frame, config.noise,
                                                             config.imu_rate, drift_seeds);
            out["stage1_drift"] = {{"horizon_s", drift.horizon},   {"n_seeds", drift.n_seeds},
                                   {"n_windows", drift.n_windows}, {"median_m", drift.median_m},
                                   {"mean_m", drift.mean_m},       {"p90_m", drift.p90_m}};
            drift_done = true;
        }
    }
    out["scenarios"] = std::move(rows);
    return out;
}

std::string bench_text_table(const nlohmann::json& bench) {
    std::ostringstream out;
    out << "scenario              frames  kf  stage1%  tokens%  uniform\n";
    for (const auto& row : bench.at("scenarios")) {
        char line[160];
        std::string uni;
        for (const auto& [n, v] : row.at("uniform").items()) {
            if (!uni.empty()) uni += " ";
            uni += n + ":" + std::to_string(v.at("token_extractions").get<std::size_t>());
        }
        std::snprintf(line, sizeof(line), "%-20s %7zu %4zu %7.2f %8.2f  %s\n",
                      row.at("scenario").get<std::string>().c_str(),
                      row.at("n_frames").get<std::size_t>(),
                      row.at("cascade").at("keyframes").get<std::size_t>(),
                      100.0 * row.at("cascade").at("stage1_retention").get<double>(),
                      100.0 * row.at("cascade").at("token_fraction").get<double>(), uni.c_str());
        out << line;
    }
    if (bench.contains("stage1_drift")) {
        const auto& d = bench.at("stage1_drift");
        out << "stage1 drift @" << d.at("horizon_s").get<double>()
            << "s: median " << d.at("median_m").get<double>() << " m, p90 "
            << d.at("p90_m").get<double>() << " m over " << d.at("n_seeds").get<int>()
            << " seeds\n";
    }
    return out.str();
}

nlohmann::json run_sweep(const std::vector<Scenario>& suite, const RunConfig& config,
                         const std::vector<double>& deltas) {
    if (suite.empty()) throw ValidationError("run_sweep: empty scenario suite");

    struct Knob {
        const char* name;
        double CascadeConfig::* field;
    };
    static constexpr Knob knobs[] = {{"tau_d", &CascadeConfig::tau_d},
                                     {"tau_theta", &CascadeConfig::tau_theta},
                                     {"tau_p", &CascadeConfig::tau_p},
                                     {"tau_v", &CascadeConfig::tau_v}};

    nlohmann::json out;
    out["version"] = kVersion;
    out["config_hash"] = config_hash(config);
    out["deltas"] = deltas;
    nlohmann::json runs = nlohmann::json::array();
    std::vector<double> abs_changes;

    for (const Scenario& sc : suite) {
        const ScenarioData data = prepare_scenario(sc, config);
        const CascadeResult base = run_scenario(data, config.cascade);
        const double base_kf = static_cast<double>(base.keyframes.size());

        for (const Knob& knob : knobs) {
            for (double delta : deltas) {
                CascadeConfig cfg = config.cascade;
                cfg.*(knob.field) = (config.cascade.*(knob.field)) * (1.0 + delta);
                const CascadeResult res = run_scenario(data, cfg);
                const double kf = static_cast<double>(res.keyframes.size());
                const double change = (kf - base_kf) / base_kf;
                if (delta != 0.0) abs_changes.push_back(std::abs(change));
                runs.push_back({{"scenario", sc.name},
                                {"threshold", knob.name},
                                {"delta", delta},
                                {"keyframes", res.keyframes.size()},
                                {"base_keyframes", base.keyframes.size()},
                                {"change_ratio", change},
                                {"stats", stats_to_json(res.stats, false)}});
            }
        }
    }
    out["runs"] = std::move(runs);
    out["summary"] = {{"median_abs_change_ratio", percentile(abs_changes, 0.5)},
                      {"p90_abs_change_ratio", percentile(abs_changes, 0.9)},
                      {"n_runs", abs_changes.size()}};
    return out;
}

}  // namespace ego
