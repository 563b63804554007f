#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tsdfslam/geometry.hpp"
#include "tsdfslam/image.hpp"

namespace tsdfslam {

struct Albedo {
    bool checker = false;
    double cell = 0.25;  // checker period in meters
    Rgb8 primary{200, 200, 200};
    Rgb8 secondary{60, 60, 60};
};

struct Primitive {
    enum class Shape { Plane, Sphere, Box };

    std::string name;
    bool dynamic = false;
    Shape shape = Shape::Plane;
    // Plane: point=a, unit normal=b. Sphere: center=a, radius=b.x().
    // Box: center=a, half extents=b. All in the object frame.
    Eigen::Vector3d a = Eigen::Vector3d::Zero();
    Eigen::Vector3d b = Eigen::Vector3d::UnitZ();
    Albedo albedo;
    std::vector<std::pair<double, Pose>> keyframes;  // object-to-world over time

    Pose PoseAt(double time) const;
    // Unsigned distance from a world point to the surface, using the pose at
    // the given time.
    double DistanceTo(const Eigen::Vector3d& point_world, double time) const;
};

// Analytic test scene: primitives plus a camera path. Frames are rendered
// exactly at the camera keyframes. Depth noise is Gaussian with sigma =
// noise_sigma_scale * z^2, applied after labeling; dropout zeroes pixels.
struct SceneScript {
    CameraIntrinsics intrinsics;
    double noise_sigma_scale = 0.0;
    double dropout = 0.0;
    std::uint32_t seed = 0;
    std::vector<Primitive> primitives;
    std::vector<std::pair<double, Pose>> camera;  // camera-to-world

    // Line-based description, '#' comments. Directives:
    //   intrinsics fx fy cx cy width height depth_scale
    //   noise sigma_scale dropout
    //   seed n
    //   primitive <name> static|dynamic plane px py pz nx ny nz <albedo>
    //   primitive <name> static|dynamic sphere cx cy cz radius <albedo>
    //   primitive <name> static|dynamic box cx cy cz hx hy hz <albedo>
    //   keyframe <name> t tx ty tz qx qy qz qw
    //   camera t tx ty tz qx qy qz qw
    // where <albedo> is "albedo uniform r g b" or
    // "albedo checker cell r1 g1 b1 r2 g2 b2".
    static SceneScript Parse(const std::string& text);
    static SceneScript ParseFile(const std::string& path);

    // Smallest distance from a world point to any static surface.
    double DistanceToStatic(const Eigen::Vector3d& point_world) const;
};

struct RenderedFrame {
    Frame frame;           // noisy depth as a sensor would deliver it
    DepthImage true_depth; // noise-free
    PixelMask dynamic_labels;
};

RenderedFrame RenderFrame(const SceneScript& scene, std::size_t frame_index);

// Writes a TUM-layout dataset: rgb/, depth/, labels/ with file lists,
// groundtruth.txt, intrinsics.txt, and gt_cloud.ply sampled from the static
// surfaces.
void GenerateSequence(const SceneScript& scene, const std::string& out_dir);

// Roughly uniform point samples of every static primitive surface. Infinite
// planes are sampled over +-plane_extent around their anchor point.
std::vector<Eigen::Vector3f> SampleStaticSurfaces(const SceneScript& scene, double spacing,
                                                  double plane_extent = 8.0);

}  // namespace tsdfslam
