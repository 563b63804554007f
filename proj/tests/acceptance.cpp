// End-to-end acceptance checks. Each criterion prints exactly one
// [PASS]/[FAIL] line with the measured numbers; the optional dataset
// regression prints [SKIP] when no data directory is configured. The
// process exits nonzero when any executed criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "tsdfslam/config.hpp"
#include "tsdfslam/dynamics_mask.hpp"
#include "tsdfslam/evaluation.hpp"
#include "tsdfslam/mesh.hpp"
#include "tsdfslam/pipeline.hpp"
#include "tsdfslam/registration.hpp"
#include "tsdfslam/spatial_hash.hpp"
#include "tsdfslam/synth.hpp"
#include "tsdfslam/tsdf_volume.hpp"
#include "test_util.hpp"

using namespace tsdfslam;
using namespace tsdfslam::testutil;

namespace {

using Clock = std::chrono::steady_clock;

double SecondsSince(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string Fmt(const char* fmt, ...) {
    char buf[256];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, args);
    va_end(args);
    return buf;
}

enum class Status { Pass, Fail, Skip };

struct Outcome {
    Status status = Status::Fail;
    std::string detail;
};

int failures = 0;

void RunCriterion(int number, const char* what, const std::function<Outcome()>& body) {
    Outcome outcome;
    try {
        outcome = body();
    } catch (const std::exception& e) {
        outcome = {Status::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = outcome.status == Status::Pass   ? "PASS"
                      : outcome.status == Status::Skip ? "SKIP"
                                                       : "FAIL";
    std::printf("[%s] criterion %d: %s (%s)\n", tag, number, what, outcome.detail.c_str());
    std::fflush(stdout);
    if (outcome.status == Status::Fail) ++failures;
}

// --- shared synthetic room -------------------------------------------------
//
// A textured box room with three static props, orbited over 30 frames with
// enough yaw that walls and corners stay in view. The dynamic variant adds a
// large sphere that enters with one fast hop and then drifts across the view.

std::string RoomScript(bool with_mover) {
    std::string s;
    s += "intrinsics 262.5 262.5 159.5 119.5 320 240 5000\n";
    s += "noise 0.001 0.0\n";
    s += "seed 42\n";
    s += "primitive room static box 0 0 0 2.2 1.4 2.2 albedo checker 0.45 225 225 225 45 45 45\n";
    s += "primitive pillar static box 1.9 -0.85 1.2 0.25 0.55 0.25 albedo checker 0.2 210 80 80 80 80 210\n";
    s += "primitive ball static sphere -1.6 0.9 1.82 0.35 albedo checker 0.3 240 200 60 60 90 200\n";
    s += "primitive crate static box -0.2 -1.1 1.6 0.45 0.3 0.35 albedo checker 0.25 90 210 120 40 60 40\n";
    char line[256];
    if (with_mover) {
        s += "primitive mover dynamic sphere 0 0 0 0.55 albedo uniform 235 90 60\n";
        s += "keyframe mover 0 1.05 0.05 1.30 0 0 0 1\n";
        std::snprintf(line, sizeof line, "keyframe mover %.9f 0.95 0.05 1.30 0 0 0 1\n", 1.0 / 30.0);
        s += line;
        std::snprintf(line, sizeof line, "keyframe mover %.9f -0.10 0.05 1.30 0 0 0 1\n", 29.0 / 30.0);
        s += line;
    }
    for (int i = 0; i < 30; ++i) {
        const double t = i / 30.0;
        const Eigen::Vector3d p(-0.45 + 0.022 * i, 0.08 * std::sin(0.21 * i), -1.35 + 0.012 * i);
        const double yaw = (18.0 + 0.9 * i) * M_PI / 180.0;
        const double pitch = 2.5 * std::sin(0.3 * i) * M_PI / 180.0;
        const Eigen::Quaterniond q =
            Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY())) *
            Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitX());
        std::snprintf(line, sizeof line, "camera %.6f %.6f %.6f %.6f %.9f %.9f %.9f %.9f\n", t,
                      p.x(), p.y(), p.z(), q.x(), q.y(), q.z(), q.w());
        s += line;
    }
    return s;
}

// Position of the moving sphere at each of the 30 frames.
Eigen::Vector3d MoverCenter(int frame) {
    const double x = frame == 0 ? 1.05 : 0.95 - 1.05 * ((frame - 1) / 28.0);
    return {x, 0.05, 1.30};
}

std::vector<RenderedFrame> RenderAll(const SceneScript& scene) {
    std::vector<RenderedFrame> frames;
    frames.reserve(scene.camera.size());
    for (std::size_t i = 0; i < scene.camera.size(); ++i) frames.push_back(RenderFrame(scene, i));
    return frames;
}

Trajectory CameraTrajectory(const SceneScript& scene) {
    Trajectory gt;
    for (const auto& [t, pose] : scene.camera) gt.push_back({t, pose});
    return gt;
}

PipelineConfig TrackingConfig() {
    PipelineConfig cfg;
    cfg.refinement.enabled = false;  // synthetic depth has no holes to fill
    cfg.Sync();
    return cfg;
}

// --- criterion 1 -------------------------------------------------------------

Outcome GradientMatchesFiniteDifferences() {
    const auto start = Clock::now();
    VolumeConfig vc;
    vc.voxel_size = 0.025;
    vc.truncation = 0.1;
    TsdfVolume volume(vc);
    FillVolume(volume, {-0.6, -0.5, 0.05}, {0.6, 0.5, 0.95}, WavyProbe, WavyProbeIntensity);
    const CameraIntrinsics k = SmallIntrinsics();
    const Frame frame = MakeFrame(
        k, [](int u, int v) { return 0.45 + 0.04 * std::sin(0.4 * u) * std::cos(0.3 * v); },
        [](int u, int v) { return 110.0 + 60.0 * std::sin(0.25 * u + 0.1 * v); });
    const RegistrationConfig config;

    std::mt19937 rng(17);
    std::uniform_real_distribution<double> translation(-0.02, 0.02);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> angle(-0.017, 0.017);
    // The sampled field is C0 across interpolation cells, so a probe interval
    // that straddles a cell face measures the kink instead of the derivative,
    // and a probe that shifts a pixel's validity measures the changed pixel
    // set. A coordinate therefore matches if it does so at any step size with
    // a stable pixel set; a wrong gradient mismatches at every step.
    const double steps[] = {1e-5, 1e-6, 1e-7};

    int poses = 0;
    int coords_ok = 0;
    int redraws = 0;
    double worst = 0.0;
    while (poses < 100) {
        if (redraws > 300) return {Status::Fail, "could not draw 100 poses with stable pixel sets"};
        const Eigen::Vector3d t(translation(rng), translation(rng), translation(rng));
        Eigen::Vector3d axis(unit(rng), unit(rng), unit(rng));
        if (axis.norm() < 1e-3) axis = Eigen::Vector3d::UnitZ();
        const Pose pose = SmallPose(t, axis, angle(rng));

        const LinearizeResult at_pose = Linearize(volume, frame, pose, config);
        if (at_pose.valid_count < 500) {
            ++redraws;
            continue;
        }
        bool usable_pose = true;
        int pose_ok = 0;
        double pose_worst = 0.0;
        for (int i = 0; i < 6 && usable_pose; ++i) {
            double coord_rel = std::numeric_limits<double>::infinity();
            for (const double h : steps) {
                Eigen::Matrix<double, 6, 1> step = Eigen::Matrix<double, 6, 1>::Zero();
                step(i) = h;
                const LinearizeResult plus =
                    Linearize(volume, frame, ExpMap(Twist(step)) * pose, config);
                const LinearizeResult minus =
                    Linearize(volume, frame, ExpMap(Twist(-step)) * pose, config);
                if (plus.valid_count != at_pose.valid_count ||
                    minus.valid_count != at_pose.valid_count) {
                    continue;
                }
                const double fd = (plus.error - minus.error) / (2.0 * h);
                const double analytic = 2.0 * at_pose.b(i);
                const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-6});
                coord_rel = std::min(coord_rel, std::abs(fd - analytic) / scale);
                if (coord_rel < 1e-3) break;
            }
            if (std::isinf(coord_rel)) {
                usable_pose = false;
                break;
            }
            pose_worst = std::max(pose_worst, coord_rel);
            if (coord_rel < 1e-3) ++pose_ok;
        }
        if (!usable_pose) {
            ++redraws;
            continue;
        }
        ++poses;
        coords_ok += pose_ok;
        worst = std::max(worst, pose_worst);
    }
    const double elapsed = SecondsSince(start);
    const bool pass = coords_ok == 600 && elapsed < 60.0;
    return {pass ? Status::Pass : Status::Fail,
            Fmt("%d/600 twist coordinates within 1e-3, worst rel err %.2e, %.1f s", coords_ok,
                worst, elapsed)};
}

// --- criterion 2 -------------------------------------------------------------

Outcome FusionMatchesAnalyticSurfaces() {
    const auto start = Clock::now();

    // Fronto-parallel plane at depth 1: along every ray the stored field must
    // reproduce 1 - z through the truncation band.
    TsdfVolume volume{VolumeConfig{}};
    const CameraIntrinsics k = SmallIntrinsics();
    const Frame frame = MakeFrame(
        k, [](int, int) { return 1.0; }, [](int, int) { return 128.0; });
    for (int n = 0; n < 10; ++n) {
        volume.AllocateForFrame(frame.depth, k, Pose::Identity());
        volume.Integrate(frame, Pose::Identity());
    }
    std::mt19937 rng(5);
    std::uniform_int_distribution<int> pick_u(3, k.width - 4);
    std::uniform_int_distribution<int> pick_v(3, k.height - 4);
    int rays_ok = 0;
    double worst_profile = 0.0;
    for (int ray = 0; ray < 100; ++ray) {
        const int u = pick_u(rng);
        const int v = pick_v(rng);
        const Eigen::Vector3d dir((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        bool ok = true;
        for (double z = 0.92; z < 1.081; z += 0.02) {
            const SdfSample s = volume.SampleSdf(z * dir);
            const double err = s.valid ? std::abs(s.value - (1.0 - z)) : 1e9;
            worst_profile = std::max(worst_profile, err);
            ok = ok && err <= volume.config().voxel_size;
        }
        rays_ok += ok;
    }

    // Sphere written directly into the volume: every extracted vertex must sit
    // on the analytic radius to within half a voxel.
    TsdfVolume sphere{VolumeConfig{}};
    const Eigen::Vector3d center(0.5, 0.5, 0.5);
    const double radius = 0.3;
    FillVolume(sphere, center - Eigen::Vector3d::Constant(radius + 0.05),
               center + Eigen::Vector3d::Constant(radius + 0.05),
               [&](const Eigen::Vector3d& p) { return (p - center).norm() - radius; });
    const Mesh mesh = ExtractMesh(sphere, 2);
    double worst_radial = 0.0;
    for (const Eigen::Vector3f& vertex : mesh.vertices) {
        const double r = (vertex.cast<double>() - center).norm();
        worst_radial = std::max(worst_radial, std::abs(r - radius));
    }
    const double elapsed = SecondsSince(start);
    const bool pass = rays_ok == 100 && !mesh.vertices.empty() &&
                      worst_radial < 0.5 * sphere.config().voxel_size && elapsed < 60.0;
    return {pass ? Status::Pass : Status::Fail,
            Fmt("%d/100 rays match 1-z within one voxel (worst %.2e), %zu mesh vertices within "
                "%.4f of the radius (worst %.2e), %.1f s",
                rays_ok, worst_profile, mesh.vertices.size(), 0.5 * sphere.config().voxel_size,
                worst_radial, elapsed)};
}

// --- criterion 3 -------------------------------------------------------------

Outcome StaticSceneTracking(double& static_ate_out) {
    const auto start = Clock::now();
    const SceneScript scene = SceneScript::Parse(RoomScript(false));
    const std::vector<RenderedFrame> rendered = RenderAll(scene);

    Pipeline pipeline(TrackingConfig());
    for (const RenderedFrame& rf : rendered) pipeline.ProcessFrame(rf.frame);
    pipeline.Finalize();

    const AteResult ate = AteRmse(pipeline.trajectory(), CameraTrajectory(scene));
    static_ate_out = ate.rmse;
    const double elapsed = SecondsSince(start);
    const bool pass =
        ate.rmse < 0.01 && pipeline.tracking_losses() == 0 && ate.pairs == 30 && elapsed < 120.0;
    return {pass ? Status::Pass : Status::Fail,
            Fmt("ATE %.4f m over %zu frames at 320x240 (bound 0.01), %zu losses, %.1f s "
                "(bound 120)",
                ate.rmse, ate.pairs, pipeline.tracking_losses(), elapsed)};
}

// --- criterion 4 -------------------------------------------------------------

Outcome DynamicSphereRejected(double static_ate) {
    const auto start = Clock::now();
    const SceneScript scene = SceneScript::Parse(RoomScript(true));
    const std::vector<RenderedFrame> rendered = RenderAll(scene);

    Pipeline pipeline(TrackingConfig());
    std::vector<PixelMask> masks(rendered.size());
    pipeline.set_debug_sink([&](const FrameDebug& dbg) {
        if (dbg.mask && dbg.frame_index < masks.size()) masks[dbg.frame_index] = *dbg.mask;
    });
    for (const RenderedFrame& rf : rendered) pipeline.ProcessFrame(rf.frame);
    pipeline.Finalize();

    // Mask quality against the rendered dynamic-pixel labels. The first frame
    // has no model yet and therefore no mask; it still counts.
    double recall_sum = 0.0;
    std::size_t recall_frames = 0;
    double masked_recall_sum = 0.0;
    std::size_t masked_recall_frames = 0;
    double fp_sum = 0.0;
    for (std::size_t f = 0; f < rendered.size(); ++f) {
        const PixelMask& gt = rendered[f].dynamic_labels;
        const std::size_t gt_px = CountMasked(gt);
        std::size_t hit = 0;
        std::size_t fp = 0;
        if (!masks[f].Empty()) {
            for (int y = 0; y < gt.height(); ++y) {
                for (int x = 0; x < gt.width(); ++x) {
                    const bool m = masks[f](x, y) != 0;
                    const bool g = gt(x, y) != 0;
                    hit += (m && g);
                    fp += (m && !g);
                }
            }
        }
        if (gt_px > 0) {
            const double recall = static_cast<double>(hit) / static_cast<double>(gt_px);
            recall_sum += recall;
            ++recall_frames;
            if (!masks[f].Empty()) {
                masked_recall_sum += recall;
                ++masked_recall_frames;
            }
        }
        const std::size_t static_px = gt.PixelCount() - gt_px;
        if (static_px > 0) fp_sum += static_cast<double>(fp) / static_cast<double>(static_px);
    }
    const double mean_recall = recall_frames ? recall_sum / recall_frames : 0.0;
    const double masked_recall =
        masked_recall_frames ? masked_recall_sum / masked_recall_frames : 0.0;
    const double mean_fp = fp_sum / static_cast<double>(rendered.size());

    // The swept corridor (each sphere position shrunk by two voxels) must hold
    // no occupied voxels once the run ends.
    const TsdfVolume& vol = pipeline.volume();
    const double vs = vol.config().voxel_size;
    const double tau = vol.config().truncation;
    const double mover_radius = 0.55;
    const double rr = mover_radius - 2.0 * vs;
    std::vector<Eigen::Vector3d> centers;
    for (int f = 0; f < 30; ++f) centers.push_back(MoverCenter(f));
    Eigen::Vector3d lo = centers.front();
    Eigen::Vector3d hi = centers.front();
    for (const Eigen::Vector3d& c : centers) {
        lo = lo.cwiseMin(c);
        hi = hi.cwiseMax(c);
    }
    lo.array() -= mover_radius;
    hi.array() += mover_radius;
    int occupied = 0;
    for (int vx = int(std::floor(lo.x() / vs)); vx <= int(std::floor(hi.x() / vs)); ++vx) {
        for (int vy = int(std::floor(lo.y() / vs)); vy <= int(std::floor(hi.y() / vs)); ++vy) {
            for (int vz = int(std::floor(lo.z() / vs)); vz <= int(std::floor(hi.z() / vs)); ++vz) {
                const Eigen::Vector3i v(vx, vy, vz);
                const Eigen::Vector3d c = vol.VoxelCenter(v);
                bool inside = false;
                for (const Eigen::Vector3d& center : centers) {
                    if ((c - center).norm() < rr) {
                        inside = true;
                        break;
                    }
                }
                if (!inside) continue;
                const Voxel* vox = vol.VoxelHandle(v);
                if (vox && vox->weight >= 1 && std::abs(vox->sdf) < 0.5 * tau) ++occupied;
            }
        }
    }

    const AteResult ate = AteRmse(pipeline.trajectory(), CameraTrajectory(scene));
    const double elapsed = SecondsSince(start);
    const bool ate_ok = !std::isnan(static_ate) && ate.rmse <= 2.0 * static_ate;
    const bool pass = mean_recall >= 0.9 && mean_fp <= 0.1 && occupied == 0 && ate_ok;
    return {pass ? Status::Pass : Status::Fail,
            Fmt("mean recall %.3f (bound 0.9; %.3f over masked frames), FP rate %.4f (bound "
                "0.1), %d occupied voxels in the swept corridor, ATE %.4f m vs 2x static %.4f, "
                "%.1f s",
                mean_recall, masked_recall, mean_fp, occupied, ate.rmse,
                2.0 * static_ate, elapsed)};
}

// --- criterion 5 -------------------------------------------------------------

Outcome RemovedObjectRevertsToFreeSpace() {
    TsdfVolume volume{VolumeConfig{}};
    const CameraIntrinsics k = SmallIntrinsics(64, 48, 60.0);
    const Eigen::Vector3d center(0.0, 0.0, 1.0);
    const double radius = 0.25;
    const auto object_depth = [&](int u, int v) {
        const Eigen::Vector3d dir((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        const double a = dir.squaredNorm();
        const double b = -2.0 * dir.dot(center);
        const double c = center.squaredNorm() - radius * radius;
        const double disc = b * b - 4.0 * a * c;
        if (disc > 0.0) {
            const double z = (-b - std::sqrt(disc)) / (2.0 * a);
            if (z > 0.2) return z;
        }
        return 2.5;
    };
    const Frame with_object = MakeFrame(k, object_depth, [](int, int) { return 128.0; });
    const Frame wall_only = MakeFrame(
        k, [](int, int) { return 2.5; }, [](int, int) { return 128.0; });

    for (int n = 0; n < 10; ++n) {
        volume.AllocateForFrame(with_object.depth, k, Pose::Identity());
        volume.Integrate(with_object, Pose::Identity());
    }

    const double vs = volume.config().voxel_size;
    const double tau = volume.config().truncation;
    std::vector<Eigen::Vector3i> object_voxels;
    const Eigen::Vector3d lo = center - Eigen::Vector3d::Constant(radius + tau);
    const Eigen::Vector3d hi = center + Eigen::Vector3d::Constant(radius + tau);
    for (int vx = int(std::floor(lo.x() / vs)); vx <= int(std::floor(hi.x() / vs)); ++vx) {
        for (int vy = int(std::floor(lo.y() / vs)); vy <= int(std::floor(hi.y() / vs)); ++vy) {
            for (int vz = int(std::floor(lo.z() / vs)); vz <= int(std::floor(hi.z() / vs)); ++vz) {
                const Eigen::Vector3i v(vx, vy, vz);
                const Voxel* vox = volume.VoxelHandle(v);
                if (vox && vox->weight >= 1 && std::abs(vox->sdf) < 0.5 * tau &&
                    (volume.VoxelCenter(v) - center).norm() < radius + tau) {
                    object_voxels.push_back(v);
                }
            }
        }
    }
    if (object_voxels.empty()) return {Status::Fail, "no occupied voxels after fusing the object"};

    int carves_needed = -1;
    for (int n = 1; n <= 30; ++n) {
        volume.CarveFreeSpace(wall_only.depth, k, Pose::Identity());
        if (carves_needed < 0) {
            bool all_free = true;
            for (const Eigen::Vector3i& v : object_voxels) {
                const Voxel* vox = volume.VoxelHandle(v);
                if (!vox || vox->sdf <= 0.5 * tau) {
                    all_free = false;
                    break;
                }
            }
            if (all_free) carves_needed = n;
        }
    }
    float min_sdf = std::numeric_limits<float>::max();
    for (const Eigen::Vector3i& v : object_voxels) {
        min_sdf = std::min(min_sdf, volume.VoxelHandle(v)->sdf);
    }
    const bool pass = carves_needed > 0;
    return {pass ? Status::Pass : Status::Fail,
            Fmt("%zu object voxels above tau/2 after %d of 30 carve frames, final min sdf %.4f",
                object_voxels.size(), carves_needed, min_sdf)};
}

// --- criterion 6 -------------------------------------------------------------

bool SameMask(const PixelMask& a, const PixelMask& b) {
    if (a.width() != b.width() || a.height() != b.height()) return false;
    for (int y = 0; y < a.height(); ++y) {
        for (int x = 0; x < a.width(); ++x) {
            if ((a(x, y) != 0) != (b(x, y) != 0)) return false;
        }
    }
    return true;
}

Outcome FloodfillMatchesHandTrace() {
    // 5x5 step fixture: left three columns at 1 m, right two at 1.5 m. From a
    // seed on the near side the growth sweeps every near pixel and the step
    // (|1.0 - 1.5| >= 0.007 * 1.0) blocks all crossings.
    DepthImage depth(5, 5, 0.f);
    for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 5; ++x) depth(x, y) = x < 3 ? 1.0f : 1.5f;
    }
    PixelMask seeds(5, 5, 0);
    seeds(1, 1) = 1;
    const PixelMask grown = FloodfillDepth(seeds, depth, 0.007, 4);

    PixelMask expected(5, 5, 0);
    for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 3; ++x) expected(x, y) = 1;
    }
    const bool trace_ok = SameMask(grown, expected);

    std::vector<std::pair<int, int>> near_pixels;
    for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 3; ++x) near_pixels.emplace_back(x, y);
    }
    std::mt19937 rng(77);
    int invariant_trials = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::shuffle(near_pixels.begin(), near_pixels.end(), rng);
        const int seed_count = 1 + static_cast<int>(rng() % 4);
        PixelMask shuffled(5, 5, 0);
        for (int j = 0; j < seed_count; ++j) shuffled(near_pixels[j].first, near_pixels[j].second) = 1;
        if (SameMask(FloodfillDepth(shuffled, depth, 0.007, 4), grown)) ++invariant_trials;
    }
    const bool pass = trace_ok && invariant_trials == 100;
    return {pass ? Status::Pass : Status::Fail,
            Fmt("hand trace %s, %d/100 shuffled seedings identical",
                trace_ok ? "matched" : "mismatched", invariant_trials)};
}

// --- criterion 7 -------------------------------------------------------------

bool CoordLess(const Eigen::Vector3i& a, const Eigen::Vector3i& b) {
    if (a.x() != b.x()) return a.x() < b.x();
    if (a.y() != b.y()) return a.y() < b.y();
    return a.z() < b.z();
}

Outcome HashTableKeepsEveryEntry() {
    const auto start = Clock::now();
    std::mt19937 rng(123);
    std::uniform_int_distribution<int> coord(-(1 << 20), (1 << 20) - 1);

    std::vector<Eigen::Vector3i> keys;
    keys.reserve(1'050'000);
    for (int i = 0; i < 1'050'000; ++i) keys.emplace_back(coord(rng), coord(rng), coord(rng));
    std::sort(keys.begin(), keys.end(), CoordLess);
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    if (keys.size() < 1'000'000) return {Status::Fail, "not enough distinct coordinates"};
    keys.resize(1'000'000);
    std::vector<Eigen::Vector3i> sorted_keys = keys;
    std::shuffle(keys.begin(), keys.end(), rng);

    CoordHashMap map;
    std::size_t duplicates = 0;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        duplicates += !map.Insert(keys[i], static_cast<std::uint32_t>(i)).second;
    }
    std::size_t lost = 0;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const std::uint32_t* value = map.Find(keys[i]);
        lost += !(value && *value == static_cast<std::uint32_t>(i));
    }
    std::size_t false_hits = 0;
    std::size_t probed = 0;
    while (probed < 1'000'000) {
        const Eigen::Vector3i q(coord(rng), coord(rng), coord(rng));
        if (std::binary_search(sorted_keys.begin(), sorted_keys.end(), q, CoordLess)) continue;
        ++probed;
        false_hits += map.Find(q) != nullptr;
    }
    const double elapsed = SecondsSince(start);
    const bool pass = duplicates == 0 && lost == 0 && false_hits == 0 &&
                      map.size() == keys.size() && elapsed < 30.0;
    return {pass ? Status::Pass : Status::Fail,
            Fmt("1e6 inserts (%zu duplicates), %zu lost, %zu false hits over 1e6 absent "
                "coordinates, %.1f s (bound 30)",
                duplicates, lost, false_hits, elapsed)};
}

// --- criterion 8 -------------------------------------------------------------

Outcome MetricsMatchClosedFormOracles() {
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Trajectory est;
    for (int i = 0; i < 50; ++i) {
        Eigen::Vector3d axis(unit(rng), unit(rng), unit(rng));
        if (axis.norm() < 1e-3) axis = Eigen::Vector3d::UnitZ();
        const Eigen::AngleAxisd aa(0.1 * i, axis.normalized());
        const Eigen::Vector3d p(std::cos(0.3 * i), 0.2 * i, std::sin(0.25 * i));
        est.push_back({0.1 * i, Pose(aa.toRotationMatrix(), p)});
    }
    const Pose rigid = SmallPose({0.4, -0.2, 1.1}, {0.3, 0.8, -0.5}, 0.7);
    Trajectory gt;
    for (const TrajectoryEntry& e : est) gt.push_back({e.timestamp, rigid * e.pose});
    const AteResult ate = AteRmse(est, gt);
    const bool ate_ok = ate.rmse < 1e-9 && ate.pairs == est.size();

    std::uniform_real_distribution<float> box(-2.f, 2.f);
    std::vector<Eigen::Vector3f> queries;
    std::vector<Eigen::Vector3f> reference;
    for (int i = 0; i < 1000; ++i) {
        queries.emplace_back(box(rng), box(rng), box(rng));
        reference.emplace_back(box(rng), box(rng), box(rng));
    }
    const std::vector<double> fast = NearestDistances(queries, reference);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const Eigen::Vector3f& r : reference) {
            best = std::min(best, (r - queries[i]).cast<double>().norm());
        }
        mismatches += fast[i] != best;
    }
    const bool pass = ate_ok && mismatches == 0;
    return {pass ? Status::Pass : Status::Fail,
            Fmt("ATE after rigid remap %.2e (bound 1e-9) over %zu pairs, %zu/1000 neighbor "
                "distances differ from brute force",
                ate.rmse, ate.pairs, mismatches)};
}

// --- criterion 9 -------------------------------------------------------------

Outcome TumSequencesWithinBounds() {
    const char* root = std::getenv("TUM_DATA_DIR");
    if (!root) return {Status::Skip, "TUM_DATA_DIR not set"};
    struct Case {
        const char* name;
        double bound;
    };
    const Case cases[] = {{"rgbd_dataset_freiburg3_sitting_static", 0.03},
                          {"rgbd_dataset_freiburg3_walking_static", 0.05}};
    std::string detail;
    bool all_ok = true;
    for (const Case& c : cases) {
        const std::filesystem::path dir = std::filesystem::path(root) / c.name;
        if (!std::filesystem::exists(dir / "depth.txt")) {
            return {Status::Skip, Fmt("%s not found under %s", c.name, root)};
        }
        const SequenceManifest manifest = LoadSequenceDir(dir.string());
        PipelineConfig cfg;
        cfg.refinement.enabled = true;
        cfg.refinement.window = 10;
        cfg.Sync();
        Pipeline pipeline(cfg);
        for (std::size_t i = 0; i < manifest.frames.size(); ++i) {
            pipeline.ProcessFrame(LoadFrame(manifest, i));
        }
        pipeline.Finalize();
        const Trajectory gt = ReadTrajectory((dir / "groundtruth.txt").string());
        const AteResult ate = AteRmse(pipeline.trajectory(), gt);
        all_ok = all_ok && ate.rmse <= c.bound;
        detail += Fmt("%s ATE %.4f m (bound %.2f); ", c.name, ate.rmse, c.bound);
    }
    return {all_ok ? Status::Pass : Status::Fail, detail};
}

}  // namespace

int main() {
    RunCriterion(1, "analytic alignment gradient matches central finite differences",
                 GradientMatchesFiniteDifferences);
    RunCriterion(2, "fused plane profile and extracted sphere mesh match analytic surfaces",
                 FusionMatchesAnalyticSurfaces);
    double static_ate = std::numeric_limits<double>::quiet_NaN();
    RunCriterion(3, "static room orbit tracks within 1 cm",
                 [&] { return StaticSceneTracking(static_ate); });
    RunCriterion(4, "crossing sphere is masked, kept out of the model, and tracked through",
                 [&] { return DynamicSphereRejected(static_ate); });
    RunCriterion(5, "removed object is carved back to free space",
                 RemovedObjectRevertsToFreeSpace);
    RunCriterion(6, "depth-bounded region growing matches the hand trace and ignores seed order",
                 FloodfillMatchesHandTrace);
    RunCriterion(7, "block hash holds a million coordinates without loss or false hits",
                 HashTableKeepsEveryEntry);
    RunCriterion(8, "trajectory error and neighbor distances match closed-form oracles",
                 MetricsMatchClosedFormOracles);
    RunCriterion(9, "TUM static sequences track within fixed bounds", TumSequencesWithinBounds);
    return failures == 0 ? 0 : 1;
}
