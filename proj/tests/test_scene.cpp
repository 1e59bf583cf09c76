#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ego/errors.hpp"
#include "ego/scene.hpp"

using namespace ego;

namespace {

double path_length(const std::vector<PoseSample>& poses) {
    double len = 0.0;
    for (std::size_t i = 1; i < poses.size(); ++i) len += (poses[i].p - poses[i - 1].p).norm();
    return len;
}

PoseSample look_at_pose(const Vec3& eye, double yaw) {
    PoseSample p;
    p.p = eye;
    const Vec3 fwd(std::cos(yaw), std::sin(yaw), 0.0);
    const Vec3 up(0.0, 0.0, 1.0);
    const Vec3 right = fwd.cross(up).normalized();
    Mat3 r;
    r.col(0) = right;
    r.col(1) = fwd.cross(right);
    r.col(2) = fwd;
    p.q = Quat(r);
    return p;
}

}  // namespace

TEST_CASE("scene generation is deterministic and surface-biased") {
    const Vec3 lo(0, 0, 0), hi(6, 5, 3);
    const SceneModel a = generate_scene(11, 500, lo, hi);
    const SceneModel b = generate_scene(11, 500, lo, hi);
    REQUIRE(a.landmarks.size() == 500);
    for (std::size_t i = 0; i < a.landmarks.size(); ++i) {
        CHECK(a.landmarks[i].id == static_cast<int>(i));
        CHECK(a.landmarks[i].p == b.landmarks[i].p);
        for (int axis = 0; axis < 3; ++axis) {
            CHECK(a.landmarks[i].p[axis] >= lo[axis] - 1e-12);
            CHECK(a.landmarks[i].p[axis] <= hi[axis] + 1e-12);
        }
        // On a wall plane: at least one coordinate pinned to a face.
        double face_dist = 1e9;
        for (int axis = 0; axis < 3; ++axis) {
            face_dist = std::min(face_dist, std::abs(a.landmarks[i].p[axis] - lo[axis]));
            face_dist = std::min(face_dist, std::abs(a.landmarks[i].p[axis] - hi[axis]));
        }
        CHECK(face_dist <= 1e-9);
    }

    const SceneModel c = generate_scene(12, 500, lo, hi);
    bool differs = false;
    for (std::size_t i = 0; i < a.landmarks.size(); ++i) {
        differs = differs || (a.landmarks[i].p - c.landmarks[i].p).norm() > 1e-12;
    }
    CHECK(differs);

    CHECK_THROWS_AS(generate_scene(1, 10, lo, hi), ValidationError);
    CHECK_THROWS_AS(generate_scene(1, 100, lo, Vec3(6, 0, 3)), ValidationError);
}

TEST_CASE("orbit trajectory satisfies the generator contract") {
    const auto poses = generate_scan_trajectory(3, ScanStyle::orbit, 30.0);
    CHECK(poses.size() == 900);
    double max_speed = 0.0, max_rot_deg = 0.0;
    for (std::size_t i = 1; i < poses.size(); ++i) {
        const double dt = poses[i].t - poses[i - 1].t;
        max_speed = std::max(max_speed, (poses[i].p - poses[i - 1].p).norm() / dt);
        const double ang = poses[i].q.angularDistance(poses[i - 1].q);
        max_rot_deg = std::max(max_rot_deg, rad2deg(ang));
    }
    CHECK(max_speed <= 0.6);
    CHECK(max_rot_deg / (1.0 / 30.0) / 30.0 <= 3.0);  // per-frame rotation < 3 degrees
    CHECK(max_rot_deg * 30.0 <= 60.0);                // angular rate <= 60 deg/s
}

TEST_CASE("all styles stay smooth and inside the room") {
    const Vec3 lo(0, 0, 0), hi(6, 5, 3);
    for (ScanStyle style : {ScanStyle::orbit, ScanStyle::sweep, ScanStyle::walkthrough}) {
        for (std::uint64_t seed : {1ull, 7ull}) {
            const auto poses = generate_scan_trajectory(seed, style, 20.0, lo, hi);
            CHECK(poses.size() == 600);
            for (std::size_t i = 0; i < poses.size(); ++i) {
                for (int axis = 0; axis < 3; ++axis) {
                    CHECK(poses[i].p[axis] > lo[axis]);
                    CHECK(poses[i].p[axis] < hi[axis]);
                }
                if (i > 0) {
                    CHECK(rad2deg(poses[i].q.angularDistance(poses[i - 1].q)) < 3.0);
                }
            }
            // Starts at rest.
            CHECK((poses[1].p - poses[0].p).norm() * 30.0 <= 1e-6);
        }
    }
    CHECK_THROWS_AS(generate_scan_trajectory(1, ScanStyle::orbit, 5.0), ValidationError);
    CHECK_THROWS_AS(parse_scan_style("spiral"), ValidationError);
}

TEST_CASE("walkthrough path length falls in the handheld range") {
    for (std::uint64_t seed : {2ull, 5ull, 9ull}) {
        const auto poses = generate_scan_trajectory(seed, ScanStyle::walkthrough, 60.0);
        const double len = path_length(poses);
        CHECK(len >= 6.0);
        CHECK(len <= 36.0);
    }
}

TEST_CASE("pinhole projection basics") {
    SceneModel scene;
    scene.room_min = Vec3(-10, -10, -10);
    scene.room_max = Vec3(10, 10, 10);

    // Landmark straight ahead on the optical axis at 2 m.
    scene.landmarks = {{0, Vec3(2.0, 0.0, 1.0)}, {1, Vec3(-2.0, 0.0, 1.0)}};
    const PoseSample pose = look_at_pose(Vec3(0.0, 0.0, 1.0), 0.0);
    const FrameObservation obs = observe(scene, pose, 0);
    REQUIRE(obs.pixels.count(0) == 1);
    CHECK(obs.pixels.at(0).x() == doctest::Approx(320.0));
    CHECK(obs.pixels.at(0).y() == doctest::Approx(240.0));
    // Behind the camera: absent.
    CHECK(obs.pixels.count(1) == 0);

    // Lateral translation of 0.2 m at 2 m depth moves the pixel by ~60 px.
    const PoseSample shifted = look_at_pose(Vec3(0.0, 0.2, 1.0), 0.0);
    const FrameObservation obs2 = observe(scene, shifted, 1);
    REQUIRE(obs2.pixels.count(0) == 1);
    const double shift = (obs2.pixels.at(0) - obs.pixels.at(0)).norm();
    CHECK(shift == doctest::Approx(600.0 * 0.2 / 2.0).epsilon(0.01));
}

TEST_CASE("average parallax over shared landmarks") {
    FrameObservation a, b;
    a.pixels = {{1, Vec2(100, 100)}, {2, Vec2(200, 200)}, {3, Vec2(300, 300)}};

    SUBCASE("identical observations") {
        const Parallax p = average_parallax(a, a);
        CHECK(p.defined);
        CHECK(p.n_tracked == 3);
        CHECK(p.mean_px == 0.0);
    }

    SUBCASE("uniform (3,4) shift gives parallax 5") {
        for (const auto& [id, px] : a.pixels) b.pixels[id] = px + Vec2(3, 4);
        const Parallax p = average_parallax(a, b);
        CHECK(p.n_tracked == 3);
        CHECK(p.mean_px == doctest::Approx(5.0));
    }

    SUBCASE("disjoint sets are flagged undefined") {
        b.pixels = {{7, Vec2(1, 1)}};
        const Parallax p = average_parallax(a, b);
        CHECK_FALSE(p.defined);
        CHECK(p.n_tracked == 0);
    }
}

TEST_CASE("parallax grows with lateral baseline") {
    const SceneModel scene = generate_scene(21, 800, Vec3(0, 0, 0), Vec3(6, 5, 3));
    const FrameObservation ref = observe(scene, look_at_pose(Vec3(3.0, 1.0, 1.4), M_PI / 2), 0);
    double prev = 0.0;
    for (int k = 1; k <= 10; ++k) {
        const double baseline = 0.03 * k;
        const FrameObservation cur =
            observe(scene, look_at_pose(Vec3(3.0 + baseline, 1.0, 1.4), M_PI / 2), k);
        const Parallax p = average_parallax(ref, cur);
        REQUIRE(p.defined);
        CHECK(p.mean_px >= prev);
        prev = p.mean_px;
    }
}

TEST_CASE("visual tokens are deterministic, local, and orthogonal across views") {
    const SceneModel scene = generate_scene(31, 600, Vec3(0, 0, 0), Vec3(6, 5, 3));
    const PoseSample pose = look_at_pose(Vec3(3.0, 2.5, 1.4), 0.3);

    const VisualToken a = visual_token(scene, pose, 256);
    const VisualToken b = visual_token(scene, pose, 256);
    REQUIRE(a.has_landmarks);
    CHECK(a.embedding == b.embedding);
    CHECK(a.embedding.norm() == doctest::Approx(1.0));

    // One degree of rotation barely moves the token.
    PoseSample nudged = pose;
    nudged.q = (pose.q * Quat(Eigen::AngleAxisd(deg2rad(1.0), Vec3::UnitY()))).normalized();
    const VisualToken c = visual_token(scene, nudged, 256);
    CHECK(1.0 - a.embedding.dot(c.embedding) < 0.05);

    CHECK_THROWS_AS(visual_token(scene, pose, 8), ValidationError);
}

TEST_CASE("disjoint views give near-orthogonal tokens in expectation") {
    double total = 0.0;
    int n = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const SceneModel scene = generate_scene(seed, 400, Vec3(0, 0, 0), Vec3(6, 5, 3));
        // Opposite directions from the room center: disjoint wall views.
        const VisualToken a = visual_token(scene, look_at_pose(Vec3(3, 2.5, 1.4), 0.0), 256);
        const VisualToken t = visual_token(scene, look_at_pose(Vec3(3, 2.5, 1.4), M_PI), 256);
        if (!a.has_landmarks || !t.has_landmarks) continue;
        total += std::abs(a.embedding.dot(t.embedding));
        ++n;
    }
    REQUIRE(n > 50);
    CHECK(total / n <= 0.2);
}

TEST_CASE("token distance is monotone in view separation") {
    const SceneModel scene = generate_scene(41, 800, Vec3(0, 0, 0), Vec3(6, 5, 3));
    const PoseSample ref = look_at_pose(Vec3(1.0, 2.5, 1.4), 0.0);
    const VisualToken ref_token = visual_token(scene, ref, 256);
    REQUIRE(ref_token.has_landmarks);

    std::vector<double> separation, distance;
    for (int k = 1; k <= 12; ++k) {
        const PoseSample moved = look_at_pose(Vec3(1.0 + 0.25 * k, 2.5, 1.4), 0.0);
        const VisualToken tok = visual_token(scene, moved, 256);
        if (!tok.has_landmarks) break;
        separation.push_back(0.25 * k);
        distance.push_back(1.0 - ref_token.embedding.dot(tok.embedding));
    }
    REQUIRE(separation.size() >= 8);

    // Spearman rank correlation between separation and token distance.
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
        return r;
    };
    const auto ra = ranks(separation);
    const auto rb = ranks(distance);
    double d2 = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
    const double n = static_cast<double>(ra.size());
    const double rho = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
    CHECK(rho >= 0.8);
}
