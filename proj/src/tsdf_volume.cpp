#include "tsdfslam/tsdf_volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "tsdfslam/errors.hpp"
#include "tsdfslam/parallel.hpp"

namespace tsdfslam {

namespace {

void CheckLittleEndian() {
    const std::uint16_t probe = 0x0102;
    std::uint8_t bytes[2];
    std::memcpy(bytes, &probe, 2);
    if (bytes[0] != 0x02) throw std::runtime_error("volume snapshots require a little-endian host");
}

template <typename T>
void WriteRaw(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void ReadRaw(std::istream& in, T& value) {
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
}

constexpr char kVolumeMagic[8] = {'T', 'S', 'D', 'F', 'V', 'O', 'L', '\0'};
constexpr std::uint32_t kVolumeVersion = 1;

}  // namespace

void VolumeConfig::Validate() const {
    if (!(voxel_size > 0)) throw std::invalid_argument("voxel_size must be positive");
    if (!(truncation >= voxel_size))
        throw std::invalid_argument("truncation must be at least one voxel_size");
    if (block_side < 2) throw std::invalid_argument("block_side must be at least 2");
    if (max_weight < 1 || max_weight > 255)
        throw std::invalid_argument("max_weight must be in [1, 255]");
    if (carve_weight < 1 || carve_weight > max_weight)
        throw std::invalid_argument("carve_weight must be in [1, max_weight]");
    if (!(min_depth > 0) || !(max_depth > min_depth))
        throw std::invalid_argument("need 0 < min_depth < max_depth");
    if (!(carve_clip > 0)) throw std::invalid_argument("carve_clip must be positive");
    if (max_blocks == 0) throw std::invalid_argument("max_blocks must be positive");
}

TsdfVolume::TsdfVolume(VolumeConfig config) : config_(config) {
    config_.Validate();
}

const VoxelBlock* TsdfVolume::FindBlock(const Eigen::Vector3i& block_coord) const {
    const std::uint32_t* idx = index_.Find(block_coord);
    return idx ? &blocks_[*idx] : nullptr;
}

bool TsdfVolume::AllocateBlock(const Eigen::Vector3i& block_coord) {
    if (index_.Find(block_coord) != nullptr) return false;
    if (blocks_.size() >= config_.max_blocks) {
        throw ResourceLimitError("voxel block budget exhausted (" +
                                 std::to_string(config_.max_blocks) + " blocks)");
    }
    const int side = config_.block_side;
    VoxelBlock block;
    block.coord = block_coord;
    block.voxels.resize(static_cast<std::size_t>(side) * side * side);
    blocks_.push_back(std::move(block));
    index_.Insert(block_coord, static_cast<std::uint32_t>(blocks_.size() - 1));
    return true;
}

const Voxel* TsdfVolume::VoxelHandle(const Eigen::Vector3i& voxel) const {
    const int side = config_.block_side;
    const Eigen::Vector3i block_coord = BlockOfVoxel(voxel, side);
    const VoxelBlock* block = FindBlock(block_coord);
    if (!block) return nullptr;
    const Eigen::Vector3i local = voxel - block_coord * side;
    return &block->voxels[(static_cast<std::size_t>(local.z()) * side + local.y()) * side +
                          local.x()];
}

Voxel* TsdfVolume::VoxelHandle(const Eigen::Vector3i& voxel) {
    return const_cast<Voxel*>(static_cast<const TsdfVolume*>(this)->VoxelHandle(voxel));
}

void TsdfVolume::AllocateForFrame(const DepthImage& depth, const CameraIntrinsics& intrinsics,
                                  const Pose& camera_to_world, const PixelMask* mask) {
    const double tau = config_.truncation;
    const double ext = block_extent();
    for (int v = 0; v < depth.height(); ++v) {
        for (int u = 0; u < depth.width(); ++u) {
            const float d = depth(u, v);
            if (!DepthValid(d) || d < config_.min_depth || d > config_.max_depth) continue;
            if (mask && (*mask)(u, v)) continue;
            const Eigen::Vector3d dir((u - intrinsics.cx) / intrinsics.fx,
                                      (v - intrinsics.cy) / intrinsics.fy, 1.0);
            const double z0 = std::max(static_cast<double>(d) - tau, 1e-4);
            const double z1 = static_cast<double>(d) + tau;
            const Eigen::Vector3d w0 = camera_to_world * (z0 * dir);
            const Eigen::Vector3d w1 = camera_to_world * (z1 * dir);
            WalkGridSegment(w0, w1, ext, [&](const Eigen::Vector3i& block) {
                AllocateBlock(block);
            });
        }
    }
}

namespace {

// Conservative frustum test on the eight block corners; returns true when the
// block provably projects outside the image or behind the camera.
bool BlockOutsideFrustum(const Eigen::Vector3i& block_coord, double block_extent,
                         const Pose& world_to_camera, const CameraIntrinsics& intr,
                         double max_z) {
    Eigen::Vector3d corners_cam[8];
    bool any_behind = false;
    double min_z = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 8; ++k) {
        const Eigen::Vector3d corner_world =
            (block_coord.cast<double>() + Eigen::Vector3d(k & 1, (k >> 1) & 1, k >> 2)) *
            block_extent;
        corners_cam[k] = world_to_camera * corner_world;
        if (corners_cam[k].z() <= 1e-9) any_behind = true;
        min_z = std::min(min_z, corners_cam[k].z());
    }
    if (min_z > max_z) return true;
    if (any_behind) {
        // Mixed or fully behind: cull only the fully-behind case.
        for (int k = 0; k < 8; ++k) {
            if (corners_cam[k].z() > 1e-9) return false;
        }
        return true;
    }
    double min_u = std::numeric_limits<double>::infinity(), max_u = -min_u;
    double min_v = min_u, max_v = -min_u;
    for (int k = 0; k < 8; ++k) {
        const Eigen::Vector2d p = Project(corners_cam[k], intr);
        min_u = std::min(min_u, p.x());
        max_u = std::max(max_u, p.x());
        min_v = std::min(min_v, p.y());
        max_v = std::max(max_v, p.y());
    }
    return max_u < -0.5 || min_u > intr.width - 0.5 || max_v < -0.5 || min_v > intr.height - 0.5;
}

}  // namespace

void TsdfVolume::Integrate(const Frame& frame, const Pose& camera_to_world, const PixelMask* mask,
                           int threads) {
    const Pose world_to_camera = camera_to_world.Inverse();
    const double tau = config_.truncation;
    const int side = config_.block_side;
    const CameraIntrinsics& intr = frame.intrinsics;
    const double min_depth = config_.min_depth;
    ParallelFor(blocks_.size(), threads, [&](std::size_t bi) {
        VoxelBlock& block = blocks_[bi];
        if (BlockOutsideFrustum(block.coord, block_extent(), world_to_camera, intr,
                                config_.max_depth + tau)) {
            return;
        }
        const Eigen::Vector3i base = block.coord * side;
        std::size_t idx = 0;
        for (int z = 0; z < side; ++z) {
            for (int y = 0; y < side; ++y) {
                for (int x = 0; x < side; ++x, ++idx) {
                    const Eigen::Vector3d center =
                        VoxelCenter(base + Eigen::Vector3i(x, y, z));
                    const Eigen::Vector3d pc = world_to_camera * center;
                    if (pc.z() <= 1e-9) continue;
                    const Eigen::Vector2d p = Project(pc, intr);
                    const int pu = static_cast<int>(std::lround(p.x()));
                    const int pv = static_cast<int>(std::lround(p.y()));
                    if (!frame.depth.InBounds(pu, pv)) continue;
                    if (mask && (*mask)(pu, pv)) continue;
                    const float d = frame.depth(pu, pv);
                    if (!DepthValid(d) || d < min_depth || d > config_.max_depth) continue;
                    const double dist = static_cast<double>(d) - pc.z();
                    if (dist <= -tau) continue;
                    Voxel& vox = block.voxels[idx];
                    const double clamped = std::min(dist, tau);
                    const double w = vox.weight;
                    vox.sdf = static_cast<float>((vox.sdf * w + clamped) / (w + 1.0));
                    if (std::abs(dist) <= tau && !frame.color.Empty()) {
                        const Rgb8 c = frame.color(pu, pv);
                        vox.r = static_cast<std::uint8_t>(std::lround((vox.r * w + c.r) / (w + 1.0)));
                        vox.g = static_cast<std::uint8_t>(std::lround((vox.g * w + c.g) / (w + 1.0)));
                        vox.b = static_cast<std::uint8_t>(std::lround((vox.b * w + c.b) / (w + 1.0)));
                    }
                    vox.weight = static_cast<std::uint8_t>(
                        std::min<int>(vox.weight + 1, config_.max_weight));
                }
            }
        }
    });
}

void TsdfVolume::CarveFreeSpace(const DepthImage& depth, const CameraIntrinsics& intrinsics,
                                const Pose& camera_to_world, int threads) {
    const Pose world_to_camera = camera_to_world.Inverse();
    const double tau = config_.truncation;
    const int side = config_.block_side;
    const int cw = config_.carve_weight;
    ParallelFor(blocks_.size(), threads, [&](std::size_t bi) {
        VoxelBlock& block = blocks_[bi];
        if (BlockOutsideFrustum(block.coord, block_extent(), world_to_camera, intrinsics,
                                config_.carve_clip)) {
            return;
        }
        const Eigen::Vector3i base = block.coord * side;
        std::size_t idx = 0;
        for (int z = 0; z < side; ++z) {
            for (int y = 0; y < side; ++y) {
                for (int x = 0; x < side; ++x, ++idx) {
                    const Eigen::Vector3d center =
                        VoxelCenter(base + Eigen::Vector3i(x, y, z));
                    const Eigen::Vector3d pc = world_to_camera * center;
                    if (pc.z() <= 1e-9 || pc.z() >= config_.carve_clip) continue;
                    const Eigen::Vector2d p = Project(pc, intrinsics);
                    const int pu = static_cast<int>(std::lround(p.x()));
                    const int pv = static_cast<int>(std::lround(p.y()));
                    if (!depth.InBounds(pu, pv)) continue;
                    const float d = depth(pu, pv);
                    if (!DepthValid(d)) continue;
                    if (pc.z() >= static_cast<double>(d) - tau) continue;
                    Voxel& vox = block.voxels[idx];
                    const double w = vox.weight;
                    vox.sdf = static_cast<float>((vox.sdf * w + tau * cw) / (w + cw));
                    vox.weight = static_cast<std::uint8_t>(
                        std::min<int>(vox.weight + cw, config_.max_weight));
                }
            }
        }
    });
}

bool TsdfVolume::GatherCorners(const Eigen::Vector3i& base, const Voxel* corners[8]) const {
    const int side = config_.block_side;
    const Eigen::Vector3i block0 = BlockOfVoxel(base, side);
    const Eigen::Vector3i block1 = BlockOfVoxel(base + Eigen::Vector3i::Ones(), side);
    if (block0 == block1) {
        const VoxelBlock* block = FindBlock(block0);
        if (!block) return false;
        const Eigen::Vector3i local = base - block0 * side;
        for (int k = 0; k < 8; ++k) {
            const int lx = local.x() + (k & 1);
            const int ly = local.y() + ((k >> 1) & 1);
            const int lz = local.z() + (k >> 2);
            const Voxel& v =
                block->voxels[(static_cast<std::size_t>(lz) * side + ly) * side + lx];
            if (v.weight == 0) return false;
            corners[k] = &v;
        }
        return true;
    }
    for (int k = 0; k < 8; ++k) {
        const Voxel* v = VoxelHandle(base + Eigen::Vector3i(k & 1, (k >> 1) & 1, k >> 2));
        if (!v || v->weight == 0) return false;
        corners[k] = v;
    }
    return true;
}

namespace {

// Interpolation cell setup shared by all samplers. The lattice of voxel
// centers is offset half a voxel from the voxel grid.
struct Cell {
    Eigen::Vector3i base;
    double fx, fy, fz;
};

inline Cell CellOf(const Eigen::Vector3d& point, double voxel_size) {
    const Eigen::Vector3d g = point / voxel_size - Eigen::Vector3d::Constant(0.5);
    const Eigen::Vector3d fl = g.array().floor();
    return {fl.cast<int>(), g.x() - fl.x(), g.y() - fl.y(), g.z() - fl.z()};
}

inline double IntensityOf(const Voxel& v) {
    return Intensity(Rgb8{v.r, v.g, v.b});
}

}  // namespace

SdfSample TsdfVolume::SampleSdf(const Eigen::Vector3d& point_world) const {
    const Cell cell = CellOf(point_world, config_.voxel_size);
    const Voxel* c[8];
    if (!GatherCorners(cell.base, c)) return {};
    const double wx[2] = {1.0 - cell.fx, cell.fx};
    const double wy[2] = {1.0 - cell.fy, cell.fy};
    const double wz[2] = {1.0 - cell.fz, cell.fz};
    double value = 0.0;
    for (int k = 0; k < 8; ++k) {
        value += wx[k & 1] * wy[(k >> 1) & 1] * wz[k >> 2] * static_cast<double>(c[k]->sdf);
    }
    return {value, true};
}

SdfSample TsdfVolume::SampleIntensity(const Eigen::Vector3d& point_world) const {
    const Cell cell = CellOf(point_world, config_.voxel_size);
    const Voxel* c[8];
    if (!GatherCorners(cell.base, c)) return {};
    const double wx[2] = {1.0 - cell.fx, cell.fx};
    const double wy[2] = {1.0 - cell.fy, cell.fy};
    const double wz[2] = {1.0 - cell.fz, cell.fz};
    double value = 0.0;
    for (int k = 0; k < 8; ++k) {
        value += wx[k & 1] * wy[(k >> 1) & 1] * wz[k >> 2] * IntensityOf(*c[k]);
    }
    return {value, true};
}

template <typename F>
SdfGradientSample TsdfVolume::SampleWithGradientImpl(const Eigen::Vector3d& point_world,
                                                     F&& value_of) const {
    const Cell cell = CellOf(point_world, config_.voxel_size);
    const Voxel* c[8];
    if (!GatherCorners(cell.base, c)) return {};
    double val[8];
    for (int k = 0; k < 8; ++k) val[k] = value_of(*c[k]);
    const double wx[2] = {1.0 - cell.fx, cell.fx};
    const double wy[2] = {1.0 - cell.fy, cell.fy};
    const double wz[2] = {1.0 - cell.fz, cell.fz};
    SdfGradientSample out;
    out.valid = true;
    for (int k = 0; k < 8; ++k) {
        out.value += wx[k & 1] * wy[(k >> 1) & 1] * wz[k >> 2] * val[k];
    }
    const double inv_s = 1.0 / config_.voxel_size;
    for (int j = 0; j < 2; ++j) {
        for (int k = 0; k < 2; ++k) {
            // Differences along each axis, weighted by the other two axes.
            out.gradient.x() += wy[j] * wz[k] * (val[1 + 2 * j + 4 * k] - val[2 * j + 4 * k]);
            out.gradient.y() += wx[j] * wz[k] * (val[j + 2 + 4 * k] - val[j + 4 * k]);
            out.gradient.z() += wx[j] * wy[k] * (val[j + 2 * k + 4] - val[j + 2 * k]);
        }
    }
    out.gradient *= inv_s;
    return out;
}

SdfGradientSample TsdfVolume::SampleSdfWithGradient(const Eigen::Vector3d& point_world) const {
    return SampleWithGradientImpl(point_world,
                                  [](const Voxel& v) { return static_cast<double>(v.sdf); });
}

SdfGradientSample TsdfVolume::SampleIntensityWithGradient(
    const Eigen::Vector3d& point_world) const {
    return SampleWithGradientImpl(point_world, IntensityOf);
}

SdfGradientSample TsdfVolume::SampleSdfGradient(const Eigen::Vector3d& point_world) const {
    SdfGradientSample out;
    const double s = config_.voxel_size;
    for (int axis = 0; axis < 3; ++axis) {
        Eigen::Vector3d offset = Eigen::Vector3d::Zero();
        offset[axis] = s;
        const SdfSample hi = SampleSdf(point_world + offset);
        const SdfSample lo = SampleSdf(point_world - offset);
        if (!hi.valid || !lo.valid) return {};
        out.gradient[axis] = (hi.value - lo.value) / (2.0 * s);
    }
    const SdfSample center = SampleSdf(point_world);
    out.value = center.value;
    out.valid = true;
    return out;
}

// Layout: magic "TSDFVOL\0", u32 version, f64 voxel_size, f64 truncation,
// i32 block_side, i32 max_weight, i32 carve_weight, f64 min_depth,
// f64 max_depth, f64 carve_clip, u64 max_blocks, u64 block_count, then per
// block an i32[3] coordinate followed by block_side^3 voxels of
// {f32 sdf, u8 weight, u8 r, u8 g, u8 b}. Everything little-endian.
void TsdfVolume::Save(const std::string& path) const {
    CheckLittleEndian();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(kVolumeMagic, sizeof(kVolumeMagic));
    WriteRaw(out, kVolumeVersion);
    WriteRaw(out, config_.voxel_size);
    WriteRaw(out, config_.truncation);
    WriteRaw(out, static_cast<std::int32_t>(config_.block_side));
    WriteRaw(out, static_cast<std::int32_t>(config_.max_weight));
    WriteRaw(out, static_cast<std::int32_t>(config_.carve_weight));
    WriteRaw(out, config_.min_depth);
    WriteRaw(out, config_.max_depth);
    WriteRaw(out, config_.carve_clip);
    WriteRaw(out, static_cast<std::uint64_t>(config_.max_blocks));
    WriteRaw(out, static_cast<std::uint64_t>(blocks_.size()));
    for (const VoxelBlock& block : blocks_) {
        const std::int32_t coord[3] = {block.coord.x(), block.coord.y(), block.coord.z()};
        out.write(reinterpret_cast<const char*>(coord), sizeof(coord));
        out.write(reinterpret_cast<const char*>(block.voxels.data()),
                  static_cast<std::streamsize>(block.voxels.size() * sizeof(Voxel)));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

TsdfVolume TsdfVolume::Load(const std::string& path) {
    CheckLittleEndian();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open volume snapshot: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kVolumeMagic, sizeof(magic)) != 0) {
        throw std::runtime_error("not a volume snapshot: " + path);
    }
    std::uint32_t version = 0;
    ReadRaw(in, version);
    if (version != kVolumeVersion) {
        throw std::runtime_error("unsupported volume snapshot version in " + path);
    }
    VolumeConfig config;
    std::int32_t block_side = 0, max_weight = 0, carve_weight = 0;
    std::uint64_t max_blocks = 0, block_count = 0;
    ReadRaw(in, config.voxel_size);
    ReadRaw(in, config.truncation);
    ReadRaw(in, block_side);
    ReadRaw(in, max_weight);
    ReadRaw(in, carve_weight);
    ReadRaw(in, config.min_depth);
    ReadRaw(in, config.max_depth);
    ReadRaw(in, config.carve_clip);
    ReadRaw(in, max_blocks);
    ReadRaw(in, block_count);
    if (!in) throw std::runtime_error("truncated volume snapshot: " + path);
    config.block_side = block_side;
    config.max_weight = max_weight;
    config.carve_weight = carve_weight;
    config.max_blocks = static_cast<std::size_t>(max_blocks);
    TsdfVolume volume(config);
    for (std::uint64_t i = 0; i < block_count; ++i) {
        std::int32_t coord[3];
        in.read(reinterpret_cast<char*>(coord), sizeof(coord));
        const Eigen::Vector3i bc(coord[0], coord[1], coord[2]);
        volume.AllocateBlock(bc);
        VoxelBlock& block = volume.blocks_.back();
        in.read(reinterpret_cast<char*>(block.voxels.data()),
                static_cast<std::streamsize>(block.voxels.size() * sizeof(Voxel)));
        if (!in) throw std::runtime_error("truncated volume snapshot: " + path);
    }
    return volume;
}

}  // namespace tsdfslam
