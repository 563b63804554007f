#include "tsdfslam/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "tsdfslam/dataset_io.hpp"
#include "tsdfslam/image_io.hpp"
#include "tsdfslam/mesh.hpp"

namespace fs = std::filesystem;

namespace tsdfslam {

namespace {

constexpr double kRayEps = 1e-6;
// Checker evaluation is phase-shifted off the lattice so surfaces lying
// exactly on cell boundaries do not alias.
constexpr double kCheckerPhase = 0.0123;

Pose InterpolatePose(const Pose& a, const Pose& b, double alpha) {
    const Eigen::Quaterniond q = a.quaternion().slerp(alpha, b.quaternion());
    const Eigen::Vector3d t = (1.0 - alpha) * a.translation() + alpha * b.translation();
    return Pose(q, t);
}

}  // namespace

Pose Primitive::PoseAt(double time) const {
    if (keyframes.empty()) return Pose::Identity();
    if (time <= keyframes.front().first) return keyframes.front().second;
    if (time >= keyframes.back().first) return keyframes.back().second;
    std::size_t hi = 1;
    while (keyframes[hi].first < time) ++hi;
    const auto& [t0, p0] = keyframes[hi - 1];
    const auto& [t1, p1] = keyframes[hi];
    const double alpha = (time - t0) / (t1 - t0);
    return InterpolatePose(p0, p1, alpha);
}

double Primitive::DistanceTo(const Eigen::Vector3d& point_world, double time) const {
    const Eigen::Vector3d q = PoseAt(time).Inverse() * point_world;
    switch (shape) {
        case Shape::Plane:
            return std::abs(b.dot(q - a));
        case Shape::Sphere:
            return std::abs((q - a).norm() - b.x());
        case Shape::Box: {
            const Eigen::Vector3d d = (q - a).cwiseAbs() - b;
            const double outside = d.cwiseMax(0.0).norm();
            const double inside = std::min(d.maxCoeff(), 0.0);
            return std::abs(outside + inside);
        }
    }
    return std::numeric_limits<double>::infinity();
}

double SceneScript::DistanceToStatic(const Eigen::Vector3d& point_world) const {
    double best = std::numeric_limits<double>::infinity();
    for (const Primitive& prim : primitives) {
        if (prim.dynamic) continue;
        best = std::min(best, prim.DistanceTo(point_world, 0.0));
    }
    return best;
}

namespace {

// Ray-primitive intersection in the object frame; returns the smallest
// parameter > kRayEps or infinity. From inside a sphere or box the exit face
// is returned, which is what makes an inside-out box usable as a room.
double Intersect(const Primitive& prim, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
    constexpr double kMiss = std::numeric_limits<double>::infinity();
    switch (prim.shape) {
        case Primitive::Shape::Plane: {
            const double denom = prim.b.dot(d);
            if (std::abs(denom) < 1e-12) return kMiss;
            const double t = prim.b.dot(prim.a - o) / denom;
            return t > kRayEps ? t : kMiss;
        }
        case Primitive::Shape::Sphere: {
            const Eigen::Vector3d oc = o - prim.a;
            const double a = d.squaredNorm();
            const double half_b = oc.dot(d);
            const double c = oc.squaredNorm() - prim.b.x() * prim.b.x();
            const double disc = half_b * half_b - a * c;
            if (disc < 0) return kMiss;
            const double root = std::sqrt(disc);
            const double t0 = (-half_b - root) / a;
            if (t0 > kRayEps) return t0;
            const double t1 = (-half_b + root) / a;
            return t1 > kRayEps ? t1 : kMiss;
        }
        case Primitive::Shape::Box: {
            double t_near = -std::numeric_limits<double>::infinity();
            double t_far = std::numeric_limits<double>::infinity();
            for (int i = 0; i < 3; ++i) {
                const double lo = prim.a[i] - prim.b[i];
                const double hi = prim.a[i] + prim.b[i];
                if (std::abs(d[i]) < 1e-15) {
                    if (o[i] < lo || o[i] > hi) return kMiss;
                    continue;
                }
                double t0 = (lo - o[i]) / d[i];
                double t1 = (hi - o[i]) / d[i];
                if (t0 > t1) std::swap(t0, t1);
                t_near = std::max(t_near, t0);
                t_far = std::min(t_far, t1);
            }
            if (t_near > t_far || t_far < kRayEps) return kMiss;
            return t_near > kRayEps ? t_near : t_far;
        }
    }
    return kMiss;
}

Rgb8 AlbedoAt(const Primitive& prim, const Eigen::Vector3d& hit_object) {
    if (!prim.albedo.checker) return prim.albedo.primary;
    const double cell = prim.albedo.cell;
    long parity = 0;
    for (int i = 0; i < 3; ++i) {
        parity += static_cast<long>(std::floor((hit_object[i] + kCheckerPhase * cell) / cell));
    }
    return (parity & 1) ? prim.albedo.secondary : prim.albedo.primary;
}

}  // namespace

RenderedFrame RenderFrame(const SceneScript& scene, std::size_t frame_index) {
    if (frame_index >= scene.camera.size()) throw std::out_of_range("no such camera keyframe");
    const auto& [time, camera] = scene.camera[frame_index];
    const CameraIntrinsics& intr = scene.intrinsics;

    RenderedFrame out;
    out.frame.timestamp = time;
    out.frame.intrinsics = intr;
    out.frame.depth = DepthImage(intr.width, intr.height, 0.f);
    out.frame.color = ColorImage(intr.width, intr.height, Rgb8{0, 0, 0});
    out.true_depth = DepthImage(intr.width, intr.height, 0.f);
    out.dynamic_labels = PixelMask(intr.width, intr.height, 0);

    struct ObjectView {
        Eigen::Matrix3d rot;  // world-to-object
        Eigen::Vector3d trans;
        const Primitive* prim;
    };
    std::vector<ObjectView> views;
    views.reserve(scene.primitives.size());
    for (const Primitive& prim : scene.primitives) {
        const Pose world_to_object = prim.PoseAt(time).Inverse();
        views.push_back({world_to_object.rotation(), world_to_object.translation(), &prim});
    }

    const Eigen::Vector3d origin_world = camera.translation();
    for (int v = 0; v < intr.height; ++v) {
        for (int u = 0; u < intr.width; ++u) {
            const Eigen::Vector3d dir_world =
                camera.rotation() *
                Eigen::Vector3d((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
            double best = std::numeric_limits<double>::infinity();
            const ObjectView* best_view = nullptr;
            for (const ObjectView& view : views) {
                const Eigen::Vector3d o = view.rot * origin_world + view.trans;
                const Eigen::Vector3d d = view.rot * dir_world;
                const double t = Intersect(*view.prim, o, d);
                if (t < best) {
                    best = t;
                    best_view = &view;
                }
            }
            if (!best_view) continue;
            out.true_depth(u, v) = static_cast<float>(best);
            out.dynamic_labels(u, v) = best_view->prim->dynamic ? 1 : 0;
            const Eigen::Vector3d hit_object =
                best_view->rot * (origin_world + best * dir_world) + best_view->trans;
            out.frame.color(u, v) = AlbedoAt(*best_view->prim, hit_object);
        }
    }

    std::mt19937 rng(scene.seed ^ static_cast<std::uint32_t>(frame_index * 2654435761u));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (int v = 0; v < intr.height; ++v) {
        for (int u = 0; u < intr.width; ++u) {
            const float z = out.true_depth(u, v);
            if (!DepthValid(z)) continue;
            if (scene.dropout > 0.0 && uniform(rng) < scene.dropout) continue;
            double noisy = z;
            if (scene.noise_sigma_scale > 0.0) {
                noisy += gauss(rng) * scene.noise_sigma_scale * z * z;
            }
            out.frame.depth(u, v) = noisy > 0.0 ? static_cast<float>(noisy) : 0.f;
        }
    }
    return out;
}

namespace {

Pose ParsePoseTokens(std::istringstream& ls, const std::string& where) {
    double tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
        throw std::invalid_argument(where + ": expected tx ty tz qx qy qz qw");
    }
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (std::abs(q.norm() - 1.0) > 1e-3) {
        throw std::invalid_argument(where + ": quaternion norm is not 1");
    }
    return Pose(q.normalized(), Eigen::Vector3d(tx, ty, tz));
}

Albedo ParseAlbedo(std::istringstream& ls, const std::string& where) {
    std::string word, kind;
    if (!(ls >> word >> kind) || word != "albedo") {
        throw std::invalid_argument(where + ": expected albedo description");
    }
    Albedo albedo;
    auto read_rgb = [&](Rgb8& out) {
        int r, g, b;
        if (!(ls >> r >> g >> b) || r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255) {
            throw std::invalid_argument(where + ": albedo channels must be 0..255");
        }
        out = Rgb8{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                   static_cast<std::uint8_t>(b)};
    };
    if (kind == "uniform") {
        read_rgb(albedo.primary);
    } else if (kind == "checker") {
        albedo.checker = true;
        if (!(ls >> albedo.cell) || !(albedo.cell > 0)) {
            throw std::invalid_argument(where + ": checker cell must be positive");
        }
        read_rgb(albedo.primary);
        read_rgb(albedo.secondary);
    } else {
        throw std::invalid_argument(where + ": unknown albedo kind '" + kind + "'");
    }
    return albedo;
}

}  // namespace

SceneScript SceneScript::Parse(const std::string& text) {
    SceneScript scene;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = "scene line " + std::to_string(line_no);
        const std::size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        std::string directive;
        ls >> directive;
        if (directive == "intrinsics") {
            CameraIntrinsics k;
            if (!(ls >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height >> k.depth_scale) ||
                !k.Valid()) {
                throw std::invalid_argument(where + ": invalid intrinsics");
            }
            scene.intrinsics = k;
        } else if (directive == "noise") {
            if (!(ls >> scene.noise_sigma_scale >> scene.dropout) ||
                scene.noise_sigma_scale < 0 || scene.dropout < 0 || scene.dropout >= 1) {
                throw std::invalid_argument(where + ": invalid noise parameters");
            }
        } else if (directive == "seed") {
            if (!(ls >> scene.seed)) throw std::invalid_argument(where + ": invalid seed");
        } else if (directive == "primitive") {
            Primitive prim;
            std::string motion, shape;
            if (!(ls >> prim.name >> motion >> shape)) {
                throw std::invalid_argument(where + ": expected name, motion, shape");
            }
            if (motion != "static" && motion != "dynamic") {
                throw std::invalid_argument(where + ": motion must be static or dynamic");
            }
            prim.dynamic = motion == "dynamic";
            if (shape == "plane") {
                prim.shape = Primitive::Shape::Plane;
                if (!(ls >> prim.a.x() >> prim.a.y() >> prim.a.z() >> prim.b.x() >> prim.b.y() >>
                      prim.b.z())) {
                    throw std::invalid_argument(where + ": plane needs point and normal");
                }
                if (prim.b.norm() < 1e-9) {
                    throw std::invalid_argument(where + ": plane normal must be nonzero");
                }
                prim.b.normalize();
            } else if (shape == "sphere") {
                prim.shape = Primitive::Shape::Sphere;
                if (!(ls >> prim.a.x() >> prim.a.y() >> prim.a.z() >> prim.b.x()) ||
                    !(prim.b.x() > 0)) {
                    throw std::invalid_argument(where + ": sphere needs center and radius > 0");
                }
                prim.b.y() = prim.b.z() = 0.0;
            } else if (shape == "box") {
                prim.shape = Primitive::Shape::Box;
                if (!(ls >> prim.a.x() >> prim.a.y() >> prim.a.z() >> prim.b.x() >> prim.b.y() >>
                      prim.b.z()) ||
                    !(prim.b.minCoeff() > 0)) {
                    throw std::invalid_argument(where + ": box needs center and half extents > 0");
                }
            } else {
                throw std::invalid_argument(where + ": unknown shape '" + shape + "'");
            }
            prim.albedo = ParseAlbedo(ls, where);
            for (const Primitive& existing : scene.primitives) {
                if (existing.name == prim.name) {
                    throw std::invalid_argument(where + ": duplicate primitive '" + prim.name +
                                                "'");
                }
            }
            scene.primitives.push_back(std::move(prim));
        } else if (directive == "keyframe") {
            std::string name;
            double t;
            if (!(ls >> name >> t)) throw std::invalid_argument(where + ": expected name and time");
            const Pose pose = ParsePoseTokens(ls, where);
            Primitive* target = nullptr;
            for (Primitive& prim : scene.primitives) {
                if (prim.name == name) target = &prim;
            }
            if (!target) {
                throw std::invalid_argument(where + ": unknown primitive '" + name + "'");
            }
            if (!target->keyframes.empty() && t <= target->keyframes.back().first) {
                throw std::invalid_argument(where + ": keyframe times must increase");
            }
            target->keyframes.emplace_back(t, pose);
        } else if (directive == "camera") {
            double t;
            if (!(ls >> t)) throw std::invalid_argument(where + ": expected time");
            if (!scene.camera.empty() && t <= scene.camera.back().first) {
                throw std::invalid_argument(where + ": camera times must increase");
            }
            scene.camera.emplace_back(t, ParsePoseTokens(ls, where));
        } else {
            throw std::invalid_argument(where + ": unknown directive '" + directive + "'");
        }
    }
    return scene;
}

SceneScript SceneScript::ParseFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scene script: " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return Parse(text.str());
}

std::vector<Eigen::Vector3f> SampleStaticSurfaces(const SceneScript& scene, double spacing,
                                                  double plane_extent) {
    if (!(spacing > 0)) throw std::invalid_argument("spacing must be positive");
    std::vector<Eigen::Vector3f> points;
    auto emit = [&](const Pose& pose, const Eigen::Vector3d& p_object) {
        points.push_back((pose * p_object).cast<float>());
    };
    for (const Primitive& prim : scene.primitives) {
        if (prim.dynamic) continue;
        const Pose pose = prim.PoseAt(0.0);
        switch (prim.shape) {
            case Primitive::Shape::Plane: {
                Eigen::Vector3d u = prim.b.unitOrthogonal();
                Eigen::Vector3d w = prim.b.cross(u);
                const int n = static_cast<int>(plane_extent / spacing);
                for (int i = -n; i <= n; ++i) {
                    for (int j = -n; j <= n; ++j) {
                        emit(pose, prim.a + i * spacing * u + j * spacing * w);
                    }
                }
                break;
            }
            case Primitive::Shape::Sphere: {
                const double r = prim.b.x();
                const int n =
                    std::max(16, static_cast<int>(4.0 * M_PI * r * r / (spacing * spacing)));
                const double golden = M_PI * (3.0 - std::sqrt(5.0));
                for (int i = 0; i < n; ++i) {
                    const double y = 1.0 - 2.0 * (i + 0.5) / n;
                    const double radius = std::sqrt(std::max(0.0, 1.0 - y * y));
                    const double phi = golden * i;
                    emit(pose, prim.a + r * Eigen::Vector3d(radius * std::cos(phi), y,
                                                            radius * std::sin(phi)));
                }
                break;
            }
            case Primitive::Shape::Box: {
                for (int axis = 0; axis < 3; ++axis) {
                    const int a1 = (axis + 1) % 3;
                    const int a2 = (axis + 2) % 3;
                    const int n1 = std::max(1, static_cast<int>(2 * prim.b[a1] / spacing));
                    const int n2 = std::max(1, static_cast<int>(2 * prim.b[a2] / spacing));
                    for (int side = -1; side <= 1; side += 2) {
                        for (int i = 0; i <= n1; ++i) {
                            for (int j = 0; j <= n2; ++j) {
                                Eigen::Vector3d p = prim.a;
                                p[axis] += side * prim.b[axis];
                                p[a1] += -prim.b[a1] + 2.0 * prim.b[a1] * i / n1;
                                p[a2] += -prim.b[a2] + 2.0 * prim.b[a2] * j / n2;
                                emit(pose, p);
                            }
                        }
                    }
                }
                break;
            }
        }
    }
    return points;
}

void GenerateSequence(const SceneScript& scene, const std::string& out_dir) {
    if (scene.camera.empty()) throw std::invalid_argument("scene has no camera keyframes");
    const fs::path root(out_dir);
    fs::create_directories(root / "rgb");
    fs::create_directories(root / "depth");
    fs::create_directories(root / "labels");

    std::ofstream rgb_list(root / "rgb.txt");
    std::ofstream depth_list(root / "depth.txt");
    std::ofstream label_list(root / "labels.txt");
    if (!rgb_list || !depth_list || !label_list) {
        throw std::runtime_error("cannot write file lists under " + out_dir);
    }
    rgb_list << "# timestamp filename\n";
    depth_list << "# timestamp filename\n";
    label_list << "# timestamp filename\n";

    Trajectory ground_truth;
    char name[64], stamp[32];
    for (std::size_t i = 0; i < scene.camera.size(); ++i) {
        const RenderedFrame rendered = RenderFrame(scene, i);
        const double t = rendered.frame.timestamp;
        std::snprintf(name, sizeof(name), "%.6f.png", t);
        std::snprintf(stamp, sizeof(stamp), "%.6f", t);

        WritePngRgb8(rendered.frame.color, (root / "rgb" / name).string());
        WritePng16(EncodeDepth(rendered.frame.depth, scene.intrinsics.depth_scale),
                   (root / "depth" / name).string());
        Image<std::uint8_t> labels(rendered.dynamic_labels.width(),
                                   rendered.dynamic_labels.height(), 0);
        for (int y = 0; y < labels.height(); ++y) {
            for (int x = 0; x < labels.width(); ++x) {
                labels(x, y) = rendered.dynamic_labels(x, y) ? 255 : 0;
            }
        }
        WritePngGray8(labels, (root / "labels" / name).string());

        rgb_list << stamp << " rgb/" << name << "\n";
        depth_list << stamp << " depth/" << name << "\n";
        label_list << stamp << " labels/" << name << "\n";
        ground_truth.push_back({t, scene.camera[i].second});
    }
    WriteTrajectory((root / "groundtruth.txt").string(), ground_truth);
    WriteIntrinsicsFile((root / "intrinsics.txt").string(), scene.intrinsics);
    WritePointCloudPly((root / "gt_cloud.ply").string(), SampleStaticSurfaces(scene, 0.01, 4.0));
}

}  // namespace tsdfslam
