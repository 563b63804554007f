#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "test_util.hpp"
#include "tsdfslam/dataset_io.hpp"
#include "tsdfslam/mesh.hpp"
#include "tsdfslam/synth.hpp"

using namespace tsdfslam;
using tsdfslam::testutil::RotationAngle;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static std::atomic<int> counter{0};
        path = fs::temp_directory_path() /
               ("tsdfslam_synth_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

const char* kSmallIntrinsics = "intrinsics 40 40 31.5 23.5 64 48 5000\n";

SceneScript PlaneScene() {
    return SceneScript::Parse(std::string(kSmallIntrinsics) +
                              "primitive wall static plane 0 0 2 0 0 -1 albedo uniform 180 60 42\n"
                              "camera 0.0 0 0 0 0 0 0 1\n");
}

}  // namespace

TEST_CASE("plane depth equals the camera-z of the intersection") {
    const SceneScript scene = PlaneScene();
    const RenderedFrame rendered = RenderFrame(scene, 0);
    const CameraIntrinsics& k = scene.intrinsics;
    // Rays leave through pixel (u, v) with direction ((u-cx)/fx, (v-cy)/fy, 1);
    // a plane at z = 2 is hit at parameter 2 regardless of the pixel, and the
    // stored depth is that parameter, i.e. the z coordinate, not the range.
    for (int v = 0; v < k.height; ++v) {
        for (int u = 0; u < k.width; ++u) {
            CHECK(rendered.true_depth(u, v) == doctest::Approx(2.0).epsilon(1e-6));
            CHECK(rendered.dynamic_labels(u, v) == 0);
            CHECK(rendered.frame.color(u, v).r == 180);
        }
    }
    // No noise configured: delivered depth equals true depth.
    CHECK(rendered.frame.depth == rendered.true_depth);
    CHECK(rendered.frame.timestamp == doctest::Approx(0.0));
}

TEST_CASE("sphere depth matches the analytic quadratic") {
    const SceneScript scene = SceneScript::Parse(
        std::string(kSmallIntrinsics) +
        "primitive ball static sphere 0 0 2 0.5 albedo uniform 200 200 200\n"
        "camera 0.0 0 0 0 0 0 0 1\n");
    const RenderedFrame rendered = RenderFrame(scene, 0);
    const CameraIntrinsics& k = scene.intrinsics;
    int hit = 0;
    for (int v = 0; v < k.height; ++v) {
        for (int u = 0; u < k.width; ++u) {
            const Eigen::Vector3d d((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
            const Eigen::Vector3d oc(0, 0, -2.0);
            const double a = d.squaredNorm();
            const double half_b = oc.dot(d);
            const double disc = half_b * half_b - a * (oc.squaredNorm() - 0.25);
            if (disc < 0) {
                CHECK_FALSE(DepthValid(rendered.true_depth(u, v)));
                continue;
            }
            const double t = (-half_b - std::sqrt(disc)) / a;
            CHECK(rendered.true_depth(u, v) == doctest::Approx(t).epsilon(1e-6));
            ++hit;
        }
    }
    CHECK(hit > 100);
}

TEST_CASE("an inside-out box works as a room") {
    const SceneScript scene = SceneScript::Parse(
        std::string(kSmallIntrinsics) +
        "primitive room static box 0 0 0 2 2 2 albedo uniform 128 128 128\n"
        "camera 0.0 0 0 0 0 0 0 1\n");
    const RenderedFrame rendered = RenderFrame(scene, 0);
    const CameraIntrinsics& k = scene.intrinsics;
    for (int v = 0; v < k.height; v += 5) {
        for (int u = 0; u < k.width; u += 5) {
            const double a = (u - k.cx) / k.fx;
            const double b = (v - k.cy) / k.fy;
            // From the center the exit parameter is the nearest face crossing.
            double t = 2.0;
            if (a != 0.0) t = std::min(t, 2.0 / std::abs(a));
            if (b != 0.0) t = std::min(t, 2.0 / std::abs(b));
            CHECK(rendered.true_depth(u, v) == doctest::Approx(t).epsilon(1e-6));
        }
    }
}

TEST_CASE("unsigned distances to primitives") {
    Primitive box;
    box.shape = Primitive::Shape::Box;
    box.a = Eigen::Vector3d::Zero();
    box.b = Eigen::Vector3d(2, 2, 2);
    CHECK(box.DistanceTo(Eigen::Vector3d(0, 0, 1.5), 0.0) == doctest::Approx(0.5));
    CHECK(box.DistanceTo(Eigen::Vector3d(3, 0, 0), 0.0) == doctest::Approx(1.0));
    CHECK(box.DistanceTo(Eigen::Vector3d(3, 3, 0), 0.0) == doctest::Approx(std::sqrt(2.0)));
    CHECK(box.DistanceTo(Eigen::Vector3d(2, 2, 2), 0.0) == doctest::Approx(0.0));

    Primitive sphere;
    sphere.shape = Primitive::Shape::Sphere;
    sphere.a = Eigen::Vector3d(1, 0, 0);
    sphere.b = Eigen::Vector3d(0.5, 0, 0);
    CHECK(sphere.DistanceTo(Eigen::Vector3d(1.2, 0, 0), 0.0) == doctest::Approx(0.3));
    CHECK(sphere.DistanceTo(Eigen::Vector3d(3, 0, 0), 0.0) == doctest::Approx(1.5));

    Primitive plane;
    plane.shape = Primitive::Shape::Plane;
    plane.a = Eigen::Vector3d(0, 0, 2);
    plane.b = Eigen::Vector3d(0, 0, 1);
    CHECK(plane.DistanceTo(Eigen::Vector3d(5, -3, 2.7), 0.0) == doctest::Approx(0.7));

    // A moving primitive is evaluated at its interpolated pose.
    sphere.keyframes = {{0.0, Pose::Identity()},
                        {1.0, Pose(Eigen::Quaterniond::Identity(), Eigen::Vector3d(0, 0, 1))}};
    CHECK(sphere.DistanceTo(Eigen::Vector3d(1, 0, 0.5), 0.5) == doctest::Approx(0.5));

    SceneScript scene;
    scene.primitives = {box, sphere};
    scene.primitives[1].dynamic = true;
    // Only the static box counts.
    CHECK(scene.DistanceToStatic(Eigen::Vector3d(1.2, 0, 0)) == doctest::Approx(0.8));
}

TEST_CASE("keyframed poses interpolate and clamp") {
    Primitive prim;
    prim.keyframes = {
        {1.0, Pose(Eigen::Quaterniond::Identity(), Eigen::Vector3d(0, 0, 0))},
        {2.0, Pose(Eigen::Quaterniond(Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitZ())),
                   Eigen::Vector3d(1, 0, 0))}};
    CHECK(prim.PoseAt(0.5).translation().isApprox(Eigen::Vector3d(0, 0, 0), 1e-12));
    CHECK(prim.PoseAt(5.0).translation().isApprox(Eigen::Vector3d(1, 0, 0), 1e-12));
    const Pose mid = prim.PoseAt(1.25);
    CHECK(mid.translation().x() == doctest::Approx(0.25));
    CHECK(RotationAngle(mid) == doctest::Approx(M_PI / 8).epsilon(1e-9));

    Primitive still;
    CHECK(still.PoseAt(3.0).translation().norm() == doctest::Approx(0.0));
}

TEST_CASE("checker albedo renders deterministically with both tones") {
    const SceneScript scene = SceneScript::Parse(
        std::string(kSmallIntrinsics) +
        "primitive wall static plane 0 0 2 0 0 -1 albedo checker 0.4 250 250 250 20 20 20\n"
        "camera 0.0 0 0 0 0 0 0 1\n");
    const RenderedFrame a = RenderFrame(scene, 0);
    const RenderedFrame b = RenderFrame(scene, 0);
    CHECK(a.frame.color == b.frame.color);
    CHECK(a.frame.depth == b.frame.depth);

    std::size_t bright = 0, dark = 0;
    for (std::size_t i = 0; i < a.frame.color.PixelCount(); ++i) {
        const Rgb8 c = a.frame.color.data()[i];
        if (c.r == 250) ++bright;
        if (c.r == 20) ++dark;
    }
    CHECK(bright + dark == a.frame.color.PixelCount());
    CHECK(bright > 100);
    CHECK(dark > 100);
}

TEST_CASE("depth noise and dropout are seeded per frame") {
    SceneScript scene = SceneScript::Parse(std::string(kSmallIntrinsics) +
                                           "noise 0.002 0.1\n"
                                           "seed 7\n"
                                           "primitive wall static plane 0 0 2 0 0 -1 albedo "
                                           "uniform 128 128 128\n"
                                           "camera 0.0 0 0 0 0 0 0 1\n"
                                           "camera 0.1 0 0 0 0 0 0 1\n");
    const RenderedFrame first = RenderFrame(scene, 0);
    const RenderedFrame again = RenderFrame(scene, 0);
    CHECK(first.frame.depth == again.frame.depth);

    const RenderedFrame second = RenderFrame(scene, 1);
    CHECK_FALSE(first.frame.depth == second.frame.depth);

    SceneScript other = scene;
    other.seed = 8;
    CHECK_FALSE(RenderFrame(other, 0).frame.depth == first.frame.depth);

    std::size_t dropped = 0;
    double max_abs = 0.0;
    for (std::size_t i = 0; i < first.frame.depth.PixelCount(); ++i) {
        const float noisy = first.frame.depth.data()[i];
        const float truth = first.true_depth.data()[i];
        REQUIRE(DepthValid(truth));
        if (!DepthValid(noisy)) {
            ++dropped;
            continue;
        }
        max_abs = std::max(max_abs, static_cast<double>(std::abs(noisy - truth)));
    }
    const double fraction =
        static_cast<double>(dropped) / static_cast<double>(first.frame.depth.PixelCount());
    CHECK(fraction > 0.05);
    CHECK(fraction < 0.16);
    // sigma = 0.002 * 2^2 = 8 mm; six sigma bounds essentially everything.
    CHECK(max_abs > 1e-4);
    CHECK(max_abs < 6.0 * 0.008);
}

TEST_CASE("dynamic primitives are labeled and move between frames") {
    const SceneScript scene = SceneScript::Parse(
        std::string(kSmallIntrinsics) +
        "primitive wall static plane 0 0 3 0 0 -1 albedo uniform 128 128 128\n"
        "primitive ball dynamic sphere 0 0 0 0.3 albedo uniform 250 40 40\n"
        "keyframe ball 0.0 -0.4 0 1.5 0 0 0 1\n"
        "keyframe ball 1.0 0.4 0 1.5 0 0 0 1\n"
        "camera 0.0 0 0 0 0 0 0 1\n"
        "camera 1.0 0 0 0 0 0 0 1\n");
    const RenderedFrame t0 = RenderFrame(scene, 0);
    const RenderedFrame t1 = RenderFrame(scene, 1);

    auto centroid_u = [](const RenderedFrame& f) {
        double sum = 0.0;
        std::size_t count = 0;
        for (int v = 0; v < f.dynamic_labels.height(); ++v) {
            for (int u = 0; u < f.dynamic_labels.width(); ++u) {
                if (!f.dynamic_labels(u, v)) continue;
                sum += u;
                ++count;
                CHECK(f.true_depth(u, v) < 3.0f);  // the ball occludes the wall
            }
        }
        REQUIRE(count > 50);
        return sum / static_cast<double>(count);
    };
    const double u0 = centroid_u(t0);
    const double u1 = centroid_u(t1);
    CHECK(u0 < scene.intrinsics.cx);
    CHECK(u1 > scene.intrinsics.cx);
    CHECK(u1 - u0 > 10.0);
    CHECK(t0.dynamic_labels(0, 0) == 0);
    CHECK(t0.true_depth(0, 0) == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("scene scripts reject malformed input") {
    const std::string head(kSmallIntrinsics);
    CHECK_THROWS_AS(SceneScript::Parse("orbit 1 2 3\n"), std::invalid_argument);
    CHECK_THROWS_AS(SceneScript::Parse("intrinsics 40 40\n"), std::invalid_argument);
    CHECK_THROWS_AS(SceneScript::Parse("noise 0.001 1.5\n"), std::invalid_argument);
    CHECK_THROWS_AS(
        SceneScript::Parse(head + "primitive b static sphere 0 0 2 -1 albedo uniform 1 2 3\n"),
        std::invalid_argument);
    CHECK_THROWS_AS(
        SceneScript::Parse(head + "primitive b static sphere 0 0 2 1 albedo plaid 1 2 3\n"),
        std::invalid_argument);
    CHECK_THROWS_AS(
        SceneScript::Parse(head + "primitive b static sphere 0 0 2 1 albedo uniform 300 0 0\n"),
        std::invalid_argument);
    CHECK_THROWS_AS(SceneScript::Parse(head +
                                       "primitive b static sphere 0 0 2 1 albedo uniform 1 2 3\n"
                                       "primitive b static sphere 0 0 4 1 albedo uniform 1 2 3\n"),
                    std::invalid_argument);
    CHECK_THROWS_AS(SceneScript::Parse(head + "keyframe ghost 0.0 0 0 0 0 0 0 1\n"),
                    std::invalid_argument);
    CHECK_THROWS_AS(SceneScript::Parse(head +
                                       "camera 1.0 0 0 0 0 0 0 1\n"
                                       "camera 1.0 0 0 0 0 0 0 1\n"),
                    std::invalid_argument);
    CHECK_THROWS_AS(SceneScript::Parse(head + "camera 0.0 0 0 0 0 0 0 0.5\n"),
                    std::invalid_argument);
    CHECK_THROWS_AS(SceneScript::ParseFile("/nonexistent/scene.txt"), std::runtime_error);

    // Comments and blank lines are fine.
    const SceneScript ok = SceneScript::Parse("# header\n\n" + head + "seed 3\n");
    CHECK(ok.seed == 3);
    CHECK(ok.intrinsics.width == 64);
}

TEST_CASE("static surface samples lie on static surfaces") {
    const SceneScript scene = SceneScript::Parse(
        std::string(kSmallIntrinsics) +
        "primitive room static box 0 0 0 1 1 1 albedo uniform 128 128 128\n"
        "primitive ball static sphere 0.2 0 0.3 0.25 albedo uniform 200 200 200\n"
        "primitive mover dynamic sphere 0 0 0 0.2 albedo uniform 250 40 40\n");
    const std::vector<Eigen::Vector3f> points = SampleStaticSurfaces(scene, 0.05);
    CHECK(points.size() > 2000);
    for (const Eigen::Vector3f& p : points) {
        CHECK(scene.DistanceToStatic(p.cast<double>()) < 1e-5);
        // Nothing sampled from the dynamic sphere interior region around origin.
        CHECK(p.cast<double>().norm() > 0.05);
    }
    CHECK_THROWS_AS(SampleStaticSurfaces(scene, 0.0), std::invalid_argument);

    SceneScript only_dynamic;
    only_dynamic.primitives = {scene.primitives[2]};
    CHECK(SampleStaticSurfaces(only_dynamic, 0.05).empty());
}

TEST_CASE("generated sequences load back as datasets") {
    const SceneScript scene = SceneScript::Parse(
        std::string(kSmallIntrinsics) +
        "primitive room static box 0 0 1 1 1 1.2 albedo checker 0.3 220 220 220 60 60 60\n"
        "primitive ball dynamic sphere 0 0 0 0.15 albedo uniform 250 40 40\n"
        "keyframe ball 0.0 -0.2 0 1.0 0 0 0 1\n"
        "keyframe ball 0.2 0.2 0 1.0 0 0 0 1\n"
        "camera 0.0 0 0 0 0 0 0 1\n"
        "camera 0.1 0.01 0 0 0 0 0 1\n"
        "camera 0.2 0.02 0 0 0 0 0 1\n");
    TempDir dir;
    GenerateSequence(scene, dir.path.string());

    const SequenceManifest manifest = LoadSequenceDir(dir.path.string());
    REQUIRE(manifest.frames.size() == 3);
    CHECK(manifest.intrinsics.fx == doctest::Approx(40.0));
    CHECK(manifest.intrinsics.depth_scale == doctest::Approx(5000.0));

    const RenderedFrame rendered = RenderFrame(scene, 1);
    const Frame loaded = LoadFrame(manifest, 1);
    CHECK(loaded.timestamp == doctest::Approx(0.1));
    std::size_t checked = 0;
    for (int v = 0; v < loaded.depth.height(); ++v) {
        for (int u = 0; u < loaded.depth.width(); ++u) {
            if (!DepthValid(rendered.frame.depth(u, v))) continue;
            CHECK(std::abs(loaded.depth(u, v) - rendered.frame.depth(u, v)) <= 0.5 / 5000.0 + 1e-6);
            CHECK(loaded.color(u, v).r == rendered.frame.color(u, v).r);
            ++checked;
        }
    }
    CHECK(checked == loaded.depth.PixelCount());

    const PixelMask labels = LoadLabelMask(manifest, 1);
    CHECK(labels == rendered.dynamic_labels);

    const Trajectory gt = ReadTrajectory((dir.path / "groundtruth.txt").string());
    REQUIRE(gt.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK((gt[i].pose.translation() - scene.camera[i].second.translation()).norm() < 1e-9);
    }

    const Mesh cloud = ReadPly((dir.path / "gt_cloud.ply").string());
    CHECK(cloud.vertices.size() > 1000);
    CHECK(cloud.faces.empty());
    for (std::size_t i = 0; i < cloud.vertices.size(); i += 97) {
        CHECK(scene.DistanceToStatic(cloud.vertices[i].cast<double>()) < 1e-5);
    }

    CHECK_THROWS_AS(GenerateSequence(SceneScript{}, dir.path.string()), std::invalid_argument);
}
