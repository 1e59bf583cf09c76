#include "ego/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ego/errors.hpp"
#include "ego/io.hpp"
#include "ego/rng.hpp"

namespace ego {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

double to_double(const std::string& value, const std::string& where) {
    double out = 0.0;
    const char* begin = value.data();
    const auto [ptr, ec] = std::from_chars(begin, begin + value.size(), out);
    if (ec != std::errc() || ptr != begin + value.size()) {
        throw ValidationError(where + ": cannot parse number '" + value + "'");
    }
    return out;
}

std::int64_t to_int(const std::string& value, const std::string& where) {
    std::int64_t out = 0;
    const char* begin = value.data();
    const auto [ptr, ec] = std::from_chars(begin, begin + value.size(), out);
    if (ec != std::errc() || ptr != begin + value.size()) {
        throw ValidationError(where + ": cannot parse integer '" + value + "'");
    }
    return out;
}

std::uint64_t to_uint(const std::string& value, const std::string& where) {
    std::uint64_t out = 0;
    const char* begin = value.data();
    const auto [ptr, ec] = std::from_chars(begin, begin + value.size(), out);
    if (ec != std::errc() || ptr != begin + value.size()) {
        throw ValidationError(where + ": cannot parse unsigned integer '" + value + "'");
    }
    return out;
}

Vec3 to_vec3(const std::string& value, const std::string& where) {
    std::istringstream ss(value);
    std::string a, b, c, extra;
    if (!(ss >> a >> b >> c) || (ss >> extra)) {
        throw ValidationError(where + ": expected three space-separated numbers, got '" + value +
                              "'");
    }
    return Vec3(to_double(a, where), to_double(b, where), to_double(c, where));
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    using Setter = std::function<void(const std::string&, const std::string&)>;
    const std::map<std::string, Setter> setters = {
        {"trajectory.knot_dt", [&](const std::string& v, const std::string& w) { cfg.knot_dt = to_double(v, w); }},
        {"imu.rate", [&](const std::string& v, const std::string& w) { cfg.imu_rate = to_double(v, w); }},
        {"noise.sigma_a", [&](const std::string& v, const std::string& w) { cfg.noise.sigma_a = to_double(v, w); }},
        {"noise.sigma_g", [&](const std::string& v, const std::string& w) { cfg.noise.sigma_g = to_double(v, w); }},
        {"noise.sigma_ba", [&](const std::string& v, const std::string& w) { cfg.noise.sigma_ba = to_double(v, w); }},
        {"noise.sigma_bg", [&](const std::string& v, const std::string& w) { cfg.noise.sigma_bg = to_double(v, w); }},
        {"noise.seed", [&](const std::string& v, const std::string& w) { cfg.noise.seed = to_uint(v, w); }},
        {"cascade.tau_d", [&](const std::string& v, const std::string& w) { cfg.cascade.tau_d = to_double(v, w); }},
        {"cascade.tau_theta", [&](const std::string& v, const std::string& w) { cfg.cascade.tau_theta = to_double(v, w); }},
        {"cascade.tau_p", [&](const std::string& v, const std::string& w) { cfg.cascade.tau_p = to_double(v, w); }},
        {"cascade.tau_v", [&](const std::string& v, const std::string& w) { cfg.cascade.tau_v = to_double(v, w); }},
        {"cascade.min_tracked", [&](const std::string& v, const std::string& w) { cfg.cascade.min_tracked = static_cast<int>(to_int(v, w)); }},
        {"cascade.rate_video", [&](const std::string& v, const std::string& w) { cfg.cascade.rate_video = to_double(v, w); }},
        {"cascade.gravity", [&](const std::string& v, const std::string& w) { cfg.cascade.gravity = to_vec3(v, w); }},
        {"scene.seed", [&](const std::string& v, const std::string& w) { cfg.scene.seed = to_uint(v, w); }},
        {"scene.style", [&](const std::string& v, const std::string&) { cfg.scene.style = parse_scan_style(v); }},
        {"scene.duration", [&](const std::string& v, const std::string& w) { cfg.scene.duration = to_double(v, w); }},
        {"scene.n_landmarks", [&](const std::string& v, const std::string& w) { cfg.scene.n_landmarks = static_cast<int>(to_int(v, w)); }},
        {"scene.room_min", [&](const std::string& v, const std::string& w) { cfg.scene.room_min = to_vec3(v, w); }},
        {"scene.room_max", [&](const std::string& v, const std::string& w) { cfg.scene.room_max = to_vec3(v, w); }},
        {"scene.token_dim", [&](const std::string& v, const std::string& w) { cfg.scene.token_dim = static_cast<int>(to_int(v, w)); }},
        {"scene.token_sharpness", [&](const std::string& v, const std::string& w) { cfg.scene.token_sharpness = to_double(v, w); }},
        {"scene.token_depth_resolution", [&](const std::string& v, const std::string& w) { cfg.scene.token_depth_resolution = to_double(v, w); }},
        {"scene.token_bearing_resolution", [&](const std::string& v, const std::string& w) { cfg.scene.token_bearing_resolution = to_double(v, w); }},
        {"scene.max_landmarks_per_frame", [&](const std::string& v, const std::string& w) { cfg.scene.max_landmarks_per_frame = static_cast<int>(to_int(v, w)); }},
        {"fusion.d_model", [&](const std::string& v, const std::string& w) { cfg.fusion.d_model = static_cast<int>(to_int(v, w)); }},
        {"fusion.n_heads", [&](const std::string& v, const std::string& w) { cfg.fusion.n_heads = static_cast<int>(to_int(v, w)); }},
        {"fusion.d_ff", [&](const std::string& v, const std::string& w) { cfg.fusion.d_ff = static_cast<int>(to_int(v, w)); }},
        {"fusion.gru_hidden", [&](const std::string& v, const std::string& w) { cfg.fusion.gru_hidden = static_cast<int>(to_int(v, w)); }},
        {"fusion.gru_layers", [&](const std::string& v, const std::string& w) { cfg.fusion.gru_layers = static_cast<int>(to_int(v, w)); }},
        {"fusion.tokens_per_frame", [&](const std::string& v, const std::string& w) { cfg.fusion.tokens_per_frame = static_cast<int>(to_int(v, w)); }},
        {"fusion.max_segment_samples", [&](const std::string& v, const std::string& w) { cfg.fusion.max_segment_samples = static_cast<int>(to_int(v, w)); }},
        {"output.out_dir", [&](const std::string& v, const std::string&) { cfg.out_dir = v; }},
    };

    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = origin + ": line " + std::to_string(line_no);
        std::string s = trim(line);
        const std::size_t hash = s.find('#');
        if (hash != std::string::npos) s = trim(s.substr(0, hash));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ValidationError(where + ": malformed section header");
            section = trim(s.substr(1, s.size() - 2));
            continue;
        }
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos) throw ValidationError(where + ": expected key = value");
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (section.empty()) throw ValidationError(where + ": key outside any section");
        const std::string full = section + "." + key;
        const auto it = setters.find(full);
        if (it == setters.end()) throw ValidationError(where + ": unknown key '" + full + "'");
        it->second(value, where);
    }
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

std::string canonical_dump(const RunConfig& c) {
    std::ostringstream out;
    auto num = [](double v) { return format_double(v); };
    out << "[trajectory]\n";
    out << "knot_dt = " << num(c.knot_dt) << "\n";
    out << "[imu]\n";
    out << "rate = " << num(c.imu_rate) << "\n";
    out << "[noise]\n";
    out << "sigma_a = " << num(c.noise.sigma_a) << "\n";
    out << "sigma_g = " << num(c.noise.sigma_g) << "\n";
    out << "sigma_ba = " << num(c.noise.sigma_ba) << "\n";
    out << "sigma_bg = " << num(c.noise.sigma_bg) << "\n";
    out << "seed = " << c.noise.seed << "\n";
    out << "[cascade]\n";
    out << "tau_d = " << num(c.cascade.tau_d) << "\n";
    out << "tau_theta = " << num(c.cascade.tau_theta) << "\n";
    out << "tau_p = " << num(c.cascade.tau_p) << "\n";
    out << "tau_v = " << num(c.cascade.tau_v) << "\n";
    out << "min_tracked = " << c.cascade.min_tracked << "\n";
    out << "rate_video = " << num(c.cascade.rate_video) << "\n";
    out << "gravity = " << num(c.cascade.gravity.x()) << " " << num(c.cascade.gravity.y()) << " "
        << num(c.cascade.gravity.z()) << "\n";
    out << "[scene]\n";
    out << "seed = " << c.scene.seed << "\n";
    out << "style = " << to_string(c.scene.style) << "\n";
    out << "duration = " << num(c.scene.duration) << "\n";
    out << "n_landmarks = " << c.scene.n_landmarks << "\n";
    out << "room_min = " << num(c.scene.room_min.x()) << " " << num(c.scene.room_min.y()) << " "
        << num(c.scene.room_min.z()) << "\n";
    out << "room_max = " << num(c.scene.room_max.x()) << " " << num(c.scene.room_max.y()) << " "
        << num(c.scene.room_max.z()) << "\n";
    out << "token_dim = " << c.scene.token_dim << "\n";
    out << "token_sharpness = " << num(c.scene.token_sharpness) << "\n";
    out << "token_depth_resolution = " << num(c.scene.token_depth_resolution) << "\n";
    out << "token_bearing_resolution = " << num(c.scene.token_bearing_resolution) << "\n";
    out << "max_landmarks_per_frame = " << c.scene.max_landmarks_per_frame << "\n";
    out << "[fusion]\n";
    out << "d_model = " << c.fusion.d_model << "\n";
    out << "n_heads = " << c.fusion.n_heads << "\n";
    out << "d_ff = " << c.fusion.d_ff << "\n";
    out << "gru_hidden = " << c.fusion.gru_hidden << "\n";
    out << "gru_layers = " << c.fusion.gru_layers << "\n";
    out << "tokens_per_frame = " << c.fusion.tokens_per_frame << "\n";
    out << "max_segment_samples = " << c.fusion.max_segment_samples << "\n";
    out << "[output]\n";
    out << "out_dir = " << c.out_dir << "\n";
    return out.str();
}

std::string config_hash(const RunConfig& config) {
    const std::string dump = canonical_dump(config);
    const std::uint64_t h = CounterRng::stream(dump);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace ego
