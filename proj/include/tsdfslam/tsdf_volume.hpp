#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "tsdfslam/geometry.hpp"
#include "tsdfslam/image.hpp"
#include "tsdfslam/spatial_hash.hpp"

namespace tsdfslam {

struct VolumeConfig {
    double voxel_size = 0.01;   // meters
    double truncation = 0.1;    // meters
    int block_side = 8;         // voxels per block edge
    int max_weight = 64;
    int carve_weight = 1;
    double min_depth = 0.1;   // meters, measurements below are invalid
    double max_depth = 5.0;   // meters, measurements beyond are invalid
    double carve_clip = 4.0;  // meters, free space is carved no deeper than this
    std::size_t max_blocks = 1000000;

    // Throws std::invalid_argument on non-positive sizes, truncation not a
    // multiple-of-voxel-size violation is allowed, but truncation must be
    // at least one voxel.
    void Validate() const;
};

// One voxel, 8 bytes. Weight 0 means never observed (sdf meaningless).
struct Voxel {
    float sdf = 0.f;
    std::uint8_t weight = 0;
    std::uint8_t r = 0, g = 0, b = 0;
};
static_assert(sizeof(Voxel) == 8);

struct VoxelBlock {
    Eigen::Vector3i coord;      // block grid coordinate (world / (block_side * voxel_size))
    std::vector<Voxel> voxels;  // block_side^3, x fastest, then y, then z
};

struct SdfSample {
    double value = 0.0;
    bool valid = false;
};

struct SdfGradientSample {
    double value = 0.0;
    Eigen::Vector3d gradient = Eigen::Vector3d::Zero();
    bool valid = false;
};

// Sparse truncated signed distance volume over hashed voxel blocks.
//
// Conventions:
//  - Voxel v covers [v*s, (v+1)*s) per axis; its center is (v + 0.5) * s.
//  - The projective distance of a voxel is measured depth minus the voxel's
//    camera-frame z, positive in front of the surface.
//  - Sampling interpolates voxel centers trilinearly and is valid only when
//    all eight surrounding voxels have weight > 0.
//
// Concurrency: Integrate and CarveFreeSpace split work by block, so no two
// threads touch the same voxel. Allocation is single-threaded and never
// overlaps reads. Sampling is read-only.
class TsdfVolume {
  public:
    explicit TsdfVolume(VolumeConfig config);

    const VolumeConfig& config() const { return config_; }
    const std::vector<VoxelBlock>& blocks() const { return blocks_; }
    std::size_t num_blocks() const { return blocks_.size(); }

    // Allocates every block intersecting the [-truncation, +truncation]
    // segment along the viewing ray of each valid, unmasked depth pixel.
    // Throws ResourceLimitError past config.max_blocks.
    void AllocateForFrame(const DepthImage& depth, const CameraIntrinsics& intrinsics,
                          const Pose& camera_to_world, const PixelMask* mask = nullptr);

    // Projective TSDF update of all allocated voxels against one frame.
    // Masked pixels contribute nothing. Voxels more than one truncation
    // behind the measured surface are left untouched; color is averaged only
    // within the truncation band.
    void Integrate(const Frame& frame, const Pose& camera_to_world,
                   const PixelMask* mask = nullptr, int threads = 1);

    // Pushes allocated voxels that lie in observed free space (in front of
    // the measured surface by more than the truncation, no deeper than
    // carve_clip) toward +truncation with carve_weight. Ignores any mask by
    // design: carving is what removes dynamic objects from the model.
    void CarveFreeSpace(const DepthImage& depth, const CameraIntrinsics& intrinsics,
                        const Pose& camera_to_world, int threads = 1);

    // Trilinear interpolation at a world point, invalid unless all eight
    // neighbor voxels are observed.
    SdfSample SampleSdf(const Eigen::Vector3d& point_world) const;
    SdfSample SampleIntensity(const Eigen::Vector3d& point_world) const;

    // Analytic gradient of the trilinear interpolant itself, exact within a
    // cell. Used by registration.
    SdfGradientSample SampleSdfWithGradient(const Eigen::Vector3d& point_world) const;
    SdfGradientSample SampleIntensityWithGradient(const Eigen::Vector3d& point_world) const;

    // Central differences of SampleSdf with step = voxel_size, valid only if
    // all six samples are valid. Smoother than the cell-exact gradient but
    // wrong near the clamp plateaus; exposed for analysis.
    SdfGradientSample SampleSdfGradient(const Eigen::Vector3d& point_world) const;

    const Voxel* VoxelHandle(const Eigen::Vector3i& voxel) const;
    Voxel* VoxelHandle(const Eigen::Vector3i& voxel);

    Eigen::Vector3d VoxelCenter(const Eigen::Vector3i& voxel) const {
        return (voxel.cast<double>() + Eigen::Vector3d::Constant(0.5)) * config_.voxel_size;
    }
    double block_extent() const { return config_.block_side * config_.voxel_size; }

    bool AllocateBlock(const Eigen::Vector3i& block_coord);
    const VoxelBlock* FindBlock(const Eigen::Vector3i& block_coord) const;

    // Binary snapshot (config + all blocks), little-endian. See Save() for
    // the exact layout.
    void Save(const std::string& path) const;
    static TsdfVolume Load(const std::string& path);

  private:
    template <typename F>
    SdfGradientSample SampleWithGradientImpl(const Eigen::Vector3d& point_world, F&& value_of) const;
    bool GatherCorners(const Eigen::Vector3i& base, const Voxel* corners[8]) const;

    VolumeConfig config_;
    CoordHashMap index_;
    std::vector<VoxelBlock> blocks_;
};

inline int FloorDiv(int a, int b) {
    int q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

inline Eigen::Vector3i BlockOfVoxel(const Eigen::Vector3i& voxel, int block_side) {
    return {FloorDiv(voxel.x(), block_side), FloorDiv(voxel.y(), block_side),
            FloorDiv(voxel.z(), block_side)};
}

// Calls fn(block_coord) for every grid cell of size cell_extent whose
// interior the segment [a, b] passes through, in traversal order.
template <typename Fn>
void WalkGridSegment(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double cell_extent,
                     Fn&& fn) {
    const Eigen::Vector3d p0 = a / cell_extent;
    const Eigen::Vector3d p1 = b / cell_extent;
    const Eigen::Vector3d d = p1 - p0;
    Eigen::Vector3i cell(static_cast<int>(std::floor(p0.x())), static_cast<int>(std::floor(p0.y())),
                         static_cast<int>(std::floor(p0.z())));
    const Eigen::Vector3i end(static_cast<int>(std::floor(p1.x())),
                              static_cast<int>(std::floor(p1.y())),
                              static_cast<int>(std::floor(p1.z())));
    Eigen::Vector3i step = Eigen::Vector3i::Zero();
    Eigen::Vector3d t_max = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d t_delta = t_max;
    for (int i = 0; i < 3; ++i) {
        if (d[i] > 0) {
            step[i] = 1;
            t_max[i] = (std::floor(p0[i]) + 1.0 - p0[i]) / d[i];
            t_delta[i] = 1.0 / d[i];
        } else if (d[i] < 0) {
            step[i] = -1;
            t_max[i] = (p0[i] - std::floor(p0[i])) / -d[i];
            t_delta[i] = 1.0 / -d[i];
        }
    }
    const int max_steps = (end - cell).cwiseAbs().sum() + 3;
    fn(cell);
    for (int n = 0; n < max_steps && cell != end; ++n) {
        int axis = 0;
        if (t_max[1] < t_max[axis]) axis = 1;
        if (t_max[2] < t_max[axis]) axis = 2;
        if (t_max[axis] > 1.0) break;
        t_max[axis] += t_delta[axis];
        cell[axis] += step[axis];
        fn(cell);
    }
}

}  // namespace tsdfslam
