#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ego/cascade.hpp"
#include "ego/config.hpp"
#include "ego/errors.hpp"
#include "ego/fusion.hpp"
#include "ego/imu.hpp"
#include "ego/io.hpp"
#include "ego/scene.hpp"
#include "ego/suite.hpp"
#include "ego/trajectory.hpp"

namespace {

namespace fs = std::filesystem;

struct GlobalOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    bool quiet = false;
};

ego::RunConfig load_config(const GlobalOpts& g) {
    ego::RunConfig cfg;
    if (!g.config_path.empty()) cfg = ego::parse_config_file(g.config_path);
    if (g.seed) {
        cfg.noise.seed = *g.seed;
        cfg.scene.seed = *g.seed;
    }
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    return cfg;
}

std::string out_path(const GlobalOpts& g, const std::string& path) {
    if (g.out_dir.empty() || fs::path(path).is_absolute()) return path;
    fs::create_directories(g.out_dir);
    return (fs::path(g.out_dir) / path).string();
}

int cmd_gen(const GlobalOpts& g, const std::string& style, double duration, int n_landmarks,
            const std::string& poses_out, const std::string& scene_out) {
    ego::RunConfig cfg = load_config(g);
    cfg.scene.style = ego::parse_scan_style(style);
    cfg.scene.duration = duration;
    if (n_landmarks > 0) cfg.scene.n_landmarks = n_landmarks;

    ego::SceneModel scene = ego::generate_scene(cfg.scene.seed, cfg.scene.n_landmarks,
                                                cfg.scene.room_min, cfg.scene.room_max);
    scene.token_sharpness = cfg.scene.token_sharpness;
    scene.max_landmarks_per_frame = cfg.scene.max_landmarks_per_frame;
    const auto poses = ego::generate_scan_trajectory(cfg.scene.seed, cfg.scene.style,
                                                     cfg.scene.duration, cfg.scene.room_min,
                                                     cfg.scene.room_max);
    ego::write_pose_csv(out_path(g, poses_out), poses);
    ego::save_scene(out_path(g, scene_out), scene);
    if (!g.quiet) {
        std::printf("wrote %zu poses (%s, %.1f s) and %zu landmarks\n", poses.size(),
                    style.c_str(), cfg.scene.duration, scene.landmarks.size());
    }
    return 0;
}

int cmd_synth(const GlobalOpts& g, const std::string& poses_path, double rate,
              const std::string& noise_mode, const std::string& out) {
    const ego::RunConfig cfg = load_config(g);
    const auto poses = ego::read_pose_csv(poses_path);
    const ego::SplineTrajectory spline = ego::fit_spline(poses, cfg.knot_dt);

    ego::WorldFrame frame;
    frame.gravity = cfg.cascade.gravity;
    frame.R0 = poses.front().q.toRotationMatrix();

    const double use_rate = rate > 0.0 ? rate : cfg.imu_rate;
    const ego::ImuSequence ideal = ego::synthesize_ideal(spline, frame, use_rate);

    ego::NoiseModel noise = cfg.noise;
    if (noise_mode == "zero") {
        noise = ego::NoiseModel::zero();
    } else if (noise_mode != "default") {
        noise = ego::parse_config_file(noise_mode).noise;
        if (g.seed) noise.seed = *g.seed;
    }
    const ego::ImuSequence seq = ego::apply_noise(ideal, noise);
    ego::write_imu_csv(out_path(g, out), seq);
    if (!g.quiet) {
        std::printf(
            "wrote %zu IMU samples at %g Hz (sigma_a=%g sigma_g=%g sigma_ba=%g sigma_bg=%g "
            "seed=%llu)\n",
            seq.samples.size(), use_rate, noise.sigma_a, noise.sigma_g, noise.sigma_ba,
            noise.sigma_bg, static_cast<unsigned long long>(noise.seed));
    }
    return 0;
}

int cmd_filter(const GlobalOpts& g, const std::string& scene_path, const std::string& poses_path,
               const std::string& imu_path, const std::string& out_keyframes,
               const std::string& out_stats, bool timing) {
    const ego::RunConfig cfg = load_config(g);
    const ego::SceneModel scene = ego::load_scene(scene_path);
    const auto poses = ego::read_pose_csv(poses_path);
    if (poses.empty()) throw ego::ValidationError(poses_path + ": no pose rows");
    const ego::ImuSequence imu = ego::read_imu_csv(imu_path);

    std::vector<ego::FrameStamp> frames(poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i) {
        frames[i] = {static_cast<int>(i), poses[i].t};
    }
    ego::ParallaxProvider parallax;
    ego::TokenProvider token;
    ego::make_providers(scene, poses, cfg.scene.token_dim, parallax, token);

    const ego::CascadeResult res =
        ego::run_cascade(frames, imu, cfg.cascade, parallax, token,
                         poses.front().q.toRotationMatrix(), ego::Vec3::Zero());

    ego::write_keyframe_csv(out_path(g, out_keyframes), res.keyframes);
    ego::write_json(out_path(g, out_stats), ego::stats_to_json(res.stats, timing));
    if (!g.quiet) {
        std::printf("selected %zu keyframes from %lld frames (stage1 %lld, stage2 %lld, tokens %lld)\n",
                    res.keyframes.size(), static_cast<long long>(res.stats.n_frames),
                    static_cast<long long>(res.stats.n_pass_stage1),
                    static_cast<long long>(res.stats.n_pass_stage2),
                    static_cast<long long>(res.stats.n_token_extractions));
    }
    return 0;
}

int cmd_bench(const GlobalOpts& g, const std::string& suite_path, std::vector<int> uniform_counts,
              int drift_seeds, const std::string& out) {
    const ego::RunConfig cfg = load_config(g);
    const auto suite = ego::load_suite(suite_path);
    if (uniform_counts.empty()) uniform_counts = {32};
    const nlohmann::json bench = ego::run_bench(suite, cfg, uniform_counts, drift_seeds);
    if (!out.empty()) ego::write_json(out_path(g, out), bench);
    if (!g.quiet) std::fputs(ego::bench_text_table(bench).c_str(), stdout);
    return 0;
}

int cmd_sweep(const GlobalOpts& g, const std::string& suite_path, std::vector<double> deltas,
              const std::string& out) {
    const ego::RunConfig cfg = load_config(g);
    const auto suite = ego::load_suite(suite_path);
    if (deltas.empty()) deltas = {-0.5, 0.5};
    const nlohmann::json report = ego::run_sweep(suite, cfg, deltas);
    if (!out.empty()) ego::write_json(out_path(g, out), report);
    if (!g.quiet) {
        std::printf("sweep: %zu runs, median |keyframe change| %.1f%%\n",
                    report.at("summary").at("n_runs").get<std::size_t>(),
                    100.0 * report.at("summary").at("median_abs_change_ratio").get<double>());
    }
    return 0;
}

ego::FusionDims parse_dims_spec(const std::string& spec, ego::FusionCheckOptions& opts) {
    ego::FusionDims dims = opts.dims;
    std::size_t start = 0;
    while (start < spec.size()) {
        std::size_t comma = spec.find(',', start);
        if (comma == std::string::npos) comma = spec.size();
        const std::string item = spec.substr(start, comma - start);
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos) {
            throw ego::ValidationError("--dims: expected key=value, got '" + item + "'");
        }
        const std::string key = item.substr(0, eq);
        const int value = std::stoi(item.substr(eq + 1));
        if (key == "d_model") dims.d_model = value;
        else if (key == "n_heads") dims.n_heads = value;
        else if (key == "d_ff") dims.d_ff = value;
        else if (key == "gru_hidden") dims.gru_hidden = value;
        else if (key == "gru_layers") dims.gru_layers = value;
        else if (key == "tokens_per_frame") dims.tokens_per_frame = value;
        else if (key == "max_segment_samples") dims.max_segment_samples = value;
        else if (key == "n_keyframes") opts.n_keyframes = value;
        else if (key == "max_segment_len") opts.max_segment_len = value;
        else throw ego::ValidationError("--dims: unknown key '" + key + "'");
        start = comma + 1;
    }
    return dims;
}

int cmd_fuse_check(const GlobalOpts& g, const std::string& dims_spec) {
    ego::FusionCheckOptions opts;
    if (g.seed) opts.seed = *g.seed;
    if (!dims_spec.empty()) opts.dims = parse_dims_spec(dims_spec, opts);
    opts.dims.validate();

    const auto start = std::chrono::steady_clock::now();
    const ego::FusionCheckReport report = ego::run_fusion_checks(opts);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    for (const auto& line : report.lines) {
        std::printf("%s %s (%.3g)\n", line.pass ? "PASS" : "FAIL", line.name.c_str(), line.value);
    }
    std::printf("%s: %zu checks\n", report.all_pass ? "ALL PASS" : "FAILURES", report.lines.size());
    if (!g.quiet) std::fprintf(stderr, "fuse-check took %.2f s\n", elapsed);
    return report.all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"egokit: egomotion synthesis, keyframe filtering, motion-visual fusion"};
    app.require_subcommand(1);

    GlobalOpts g;
    std::uint64_t seed_value = 0;
    app.add_option("--config", g.config_path, "config file (key = value with [sections])");
    auto* seed_opt = app.add_option("--seed", seed_value, "override the top-level seed");
    app.add_option("--out-dir", g.out_dir, "directory for output files");
    app.add_flag("--quiet", g.quiet, "suppress progress output");

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic scene and scan trajectory");
    std::string gen_style = "walkthrough";
    double gen_duration = 30.0;
    int gen_landmarks = 0;
    std::string gen_poses = "poses.csv", gen_scene = "scene.json";
    gen->add_option("--style", gen_style, "orbit | sweep | walkthrough");
    gen->add_option("--duration", gen_duration, "seconds, in [10, 120]");
    gen->add_option("--n-landmarks", gen_landmarks, "landmark count (>= 50)");
    gen->add_option("--out-poses", gen_poses, "pose CSV output");
    gen->add_option("--out-scene", gen_scene, "scene JSON output");

    // synth
    auto* synth = app.add_subcommand("synth", "synthesize an IMU stream from a pose file");
    std::string synth_poses, synth_noise = "default", synth_out = "imu.csv";
    double synth_rate = 0.0;
    synth->add_option("--poses", synth_poses, "pose CSV input")->required();
    synth->add_option("--rate", synth_rate, "sample rate in Hz (default from config, 200)");
    synth->add_option("--noise", synth_noise, "default | zero | <config file with [noise]>");
    synth->add_option("--out", synth_out, "IMU CSV output");

    // filter
    auto* filter = app.add_subcommand("filter", "run the cascaded keyframe filter");
    std::string f_scene, f_poses, f_imu, f_kf = "keyframes.csv", f_stats = "stats.json";
    bool f_timing = false;
    filter->add_option("--scene", f_scene, "scene JSON")->required();
    filter->add_option("--poses", f_poses, "pose CSV")->required();
    filter->add_option("--imu", f_imu, "IMU CSV")->required();
    filter->add_option("--out-keyframes", f_kf, "keyframe CSV output");
    filter->add_option("--out-stats", f_stats, "stage statistics JSON output");
    filter->add_flag("--timing", f_timing, "include wall-clock stage times in the stats JSON");

    // bench
    auto* bench = app.add_subcommand("bench", "compare the cascade with uniform sampling");
    std::string b_suite, b_out = "bench.json";
    std::vector<int> b_uniform;
    int b_drift_seeds = 100;
    bench->add_option("--suite", b_suite, "suite manifest JSON")->required();
    bench->add_option("--uniform", b_uniform, "uniform baseline sizes (repeatable)");
    bench->add_option("--drift-seeds", b_drift_seeds, "seeds for drift characterization (0 = skip)");
    bench->add_option("--out", b_out, "bench report JSON output");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "threshold sensitivity sweep");
    std::string s_suite, s_out = "sweep.json";
    std::vector<double> s_deltas;
    sweep->add_option("--suite", s_suite, "suite manifest JSON")->required();
    sweep->add_option("--delta", s_deltas, "threshold perturbation fractions (repeatable)");
    sweep->add_option("--out", s_out, "sweep report JSON output");

    // fuse-check
    auto* fuse = app.add_subcommand("fuse-check", "fusion invariants and gradient checks");
    std::string fc_dims;
    fuse->add_option("--dims", fc_dims, "comma list, e.g. d_model=16,n_heads=2");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }
    if (seed_opt->count() > 0) g.seed = seed_value;

    try {
        if (gen->parsed()) {
            return cmd_gen(g, gen_style, gen_duration, gen_landmarks, gen_poses, gen_scene);
        }
        if (synth->parsed()) return cmd_synth(g, synth_poses, synth_rate, synth_noise, synth_out);
        if (filter->parsed()) {
            return cmd_filter(g, f_scene, f_poses, f_imu, f_kf, f_stats, f_timing);
        }
        if (bench->parsed()) return cmd_bench(g, b_suite, b_uniform, b_drift_seeds, b_out);
        if (sweep->parsed()) return cmd_sweep(g, s_suite, s_deltas, s_out);
        if (fuse->parsed()) return cmd_fuse_check(g, fc_dims);
    } catch (const ego::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ego::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
