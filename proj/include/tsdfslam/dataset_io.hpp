#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tsdfslam/geometry.hpp"
#include "tsdfslam/image.hpp"

namespace tsdfslam {

struct StampedPath {
    double timestamp = 0.0;
    std::string path;
};

// Lines of "timestamp value", comments starting with '#' skipped. The result
// is sorted by timestamp.
std::vector<StampedPath> ReadFileList(const std::string& path);

// Greedy nearest-timestamp association: candidate pairs within max_dt are
// taken in order of ascending time difference, each index used at most once.
// Returned pairs are sorted by the first list's timestamp.
std::vector<std::pair<std::size_t, std::size_t>> MatchTimestamps(const std::vector<double>& a,
                                                                 const std::vector<double>& b,
                                                                 double max_dt);

struct AssociatedFrame {
    double timestamp = 0.0;  // color timestamp
    std::string rgb_path;
    std::string depth_path;
    std::string label_path;  // empty when the sequence has no labels
};

struct SequenceManifest {
    std::string root;
    CameraIntrinsics intrinsics;
    std::vector<AssociatedFrame> frames;
};

// Expects rgb.txt and depth.txt under dir (TUM layout), optionally
// intrinsics.txt ("fx fy cx cy width height depth_scale") and labels.txt
// with per-frame dynamic-pixel masks. Throws std::runtime_error when lists
// are missing or nothing associates.
SequenceManifest LoadSequenceDir(const std::string& dir, double max_dt = 0.02);

Frame LoadFrame(const SequenceManifest& manifest, std::size_t index);

// Ground-truth dynamic-pixel mask (nonzero = dynamic). Throws when the frame
// has no label image.
PixelMask LoadLabelMask(const SequenceManifest& manifest, std::size_t index);

struct TrajectoryEntry {
    double timestamp = 0.0;
    Pose pose;  // camera to world
};
using Trajectory = std::vector<TrajectoryEntry>;

// "timestamp tx ty tz qx qy qz qw" per line. Reading rejects malformed lines
// and quaternions whose norm is off by more than 1e-3; writing uses enough
// digits that a round trip preserves poses to well below 1e-9.
Trajectory ReadTrajectory(const std::string& path);
void WriteTrajectory(const std::string& path, const Trajectory& trajectory);

CameraIntrinsics ReadIntrinsicsFile(const std::string& path);
void WriteIntrinsicsFile(const std::string& path, const CameraIntrinsics& intrinsics);

}  // namespace tsdfslam
