#include "ego/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ego/errors.hpp"

namespace ego {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    return fields;
}

double parse_double(const std::string& text, const std::string& path, int line_no) {
    const char* begin = text.data();
    const char* end = begin + text.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        throw ValidationError(path + ": line " + std::to_string(line_no) +
                              ": cannot parse number '" + text + "'");
    }
    return value;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return in;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    return out;
}

void expect_header(std::ifstream& in, const std::string& path, const std::string& expected) {
    std::string header;
    if (!std::getline(in, header)) throw ValidationError(path + ": empty file");
    if (!header.empty() && header.back() == '\r') header.pop_back();
    if (header != expected) {
        throw ValidationError(path + ": line 1: expected header '" + expected + "', got '" +
                              header + "'");
    }
}

}  // namespace

std::string format_double(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

std::vector<PoseSample> read_pose_csv(const std::string& path) {
    auto in = open_input(path);
    expect_header(in, path, "t,px,py,pz,qw,qx,qy,qz");
    std::vector<PoseSample> samples;
    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 8) {
            throw ValidationError(path + ": line " + std::to_string(line_no) + ": expected 8 fields, got " +
                                  std::to_string(f.size()));
        }
        PoseSample s;
        s.t = parse_double(f[0], path, line_no);
        s.p = Vec3(parse_double(f[1], path, line_no), parse_double(f[2], path, line_no),
                   parse_double(f[3], path, line_no));
        s.q = Quat(parse_double(f[4], path, line_no), parse_double(f[5], path, line_no),
                   parse_double(f[6], path, line_no), parse_double(f[7], path, line_no));
        samples.push_back(s);
    }
    return samples;
}

void write_pose_csv(const std::string& path, const std::vector<PoseSample>& samples) {
    auto out = open_output(path);
    out << "t,px,py,pz,qw,qx,qy,qz\n";
    for (const PoseSample& s : samples) {
        out << format_double(s.t) << ',' << format_double(s.p.x()) << ','
            << format_double(s.p.y()) << ',' << format_double(s.p.z()) << ','
            << format_double(s.q.w()) << ',' << format_double(s.q.x()) << ','
            << format_double(s.q.y()) << ',' << format_double(s.q.z()) << '\n';
    }
    if (!out) throw IoError("failed writing " + path);
}

ImuSequence read_imu_csv(const std::string& path) {
    auto in = open_input(path);
    expect_header(in, path, "t,wx,wy,wz,ax,ay,az");
    ImuSequence seq;
    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 7) {
            throw ValidationError(path + ": line " + std::to_string(line_no) + ": expected 7 fields, got " +
                                  std::to_string(f.size()));
        }
        ImuSample s;
        s.t = parse_double(f[0], path, line_no);
        s.gyro = Vec3(parse_double(f[1], path, line_no), parse_double(f[2], path, line_no),
                      parse_double(f[3], path, line_no));
        s.accel = Vec3(parse_double(f[4], path, line_no), parse_double(f[5], path, line_no),
                       parse_double(f[6], path, line_no));
        seq.samples.push_back(s);
    }
    if (seq.samples.size() >= 2) {
        seq.rate = 1.0 / (seq.samples[1].t - seq.samples[0].t);
    }
    return seq;
}

void write_imu_csv(const std::string& path, const ImuSequence& seq) {
    auto out = open_output(path);
    out << "t,wx,wy,wz,ax,ay,az\n";
    for (const ImuSample& s : seq.samples) {
        out << format_double(s.t) << ',' << format_double(s.gyro.x()) << ','
            << format_double(s.gyro.y()) << ',' << format_double(s.gyro.z()) << ','
            << format_double(s.accel.x()) << ',' << format_double(s.accel.y()) << ','
            << format_double(s.accel.z()) << '\n';
    }
    if (!out) throw IoError("failed writing " + path);
}

void write_keyframe_csv(const std::string& path, const std::vector<KeyframeRecord>& records) {
    auto out = open_output(path);
    out << "frame_index,t\n";
    for (const KeyframeRecord& r : records) {
        out << r.frame_index << ',' << format_double(r.t) << '\n';
    }
    if (!out) throw IoError("failed writing " + path);
}

nlohmann::json scene_to_json(const SceneModel& scene) {
    nlohmann::json j;
    j["room"] = {{"min", {scene.room_min.x(), scene.room_min.y(), scene.room_min.z()}},
                 {"max", {scene.room_max.x(), scene.room_max.y(), scene.room_max.z()}}};
    j["intrinsics"] = {{"fx", scene.intrinsics.fx},     {"fy", scene.intrinsics.fy},
                       {"cx", scene.intrinsics.cx},     {"cy", scene.intrinsics.cy},
                       {"width", scene.intrinsics.width}, {"height", scene.intrinsics.height}};
    j["visibility"] = {{"min_depth", scene.min_depth},
                       {"max_depth", scene.max_depth},
                       {"max_landmarks_per_frame", scene.max_landmarks_per_frame}};
    j["token_sharpness"] = scene.token_sharpness;
    j["token_depth_resolution"] = scene.token_depth_resolution;
    j["token_bearing_resolution"] = scene.token_bearing_resolution;
    nlohmann::json lms = nlohmann::json::array();
    for (const auto& lm : scene.landmarks) {
        lms.push_back({lm.id, lm.p.x(), lm.p.y(), lm.p.z()});
    }
    j["landmarks"] = std::move(lms);
    return j;
}

SceneModel scene_from_json(const nlohmann::json& j) {
    SceneModel scene;
    try {
        const auto& room = j.at("room");
        for (int i = 0; i < 3; ++i) {
            scene.room_min[i] = room.at("min").at(i).get<double>();
            scene.room_max[i] = room.at("max").at(i).get<double>();
        }
        const auto& in = j.at("intrinsics");
        scene.intrinsics.fx = in.at("fx").get<double>();
        scene.intrinsics.fy = in.at("fy").get<double>();
        scene.intrinsics.cx = in.at("cx").get<double>();
        scene.intrinsics.cy = in.at("cy").get<double>();
        scene.intrinsics.width = in.at("width").get<int>();
        scene.intrinsics.height = in.at("height").get<int>();
        const auto& vis = j.at("visibility");
        scene.min_depth = vis.at("min_depth").get<double>();
        scene.max_depth = vis.at("max_depth").get<double>();
        scene.max_landmarks_per_frame = vis.at("max_landmarks_per_frame").get<int>();
        scene.token_sharpness = j.at("token_sharpness").get<double>();
        scene.token_depth_resolution = j.at("token_depth_resolution").get<double>();
        scene.token_bearing_resolution = j.at("token_bearing_resolution").get<double>();
        scene.landmarks.clear();
        for (const auto& lm : j.at("landmarks")) {
            scene.landmarks.push_back(
                {lm.at(0).get<int>(),
                 Vec3(lm.at(1).get<double>(), lm.at(2).get<double>(), lm.at(3).get<double>())});
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad scene JSON: ") + e.what());
    }
    return scene;
}

void save_scene(const std::string& path, const SceneModel& scene) {
    write_json(path, scene_to_json(scene));
}

SceneModel load_scene(const std::string& path) { return scene_from_json(read_json(path)); }

nlohmann::json stats_to_json(const StageStats& stats, bool include_timing) {
    nlohmann::json j;
    j["n_frames"] = stats.n_frames;
    j["n_pass_stage1"] = stats.n_pass_stage1;
    j["n_pass_stage2"] = stats.n_pass_stage2;
    j["n_keyframes"] = stats.n_keyframes;
    j["n_token_extractions"] = stats.n_token_extractions;
    if (include_timing) {
        j["wall_time_stage1"] = stats.wall_time_stage1;
        j["wall_time_stage2"] = stats.wall_time_stage2;
        j["wall_time_stage3"] = stats.wall_time_stage3;
    }
    return j;
}

void write_json(const std::string& path, const nlohmann::json& j) {
    auto out = open_output(path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("failed writing " + path);
}

nlohmann::json read_json(const std::string& path) {
    auto in = open_input(path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ": " + e.what());
    }
    return j;
}

}  // namespace ego
