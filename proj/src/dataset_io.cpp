#include "tsdfslam/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tsdfslam/image_io.hpp"

namespace fs = std::filesystem;

namespace tsdfslam {

std::vector<StampedPath> ReadFileList(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file list: " + path);
    std::vector<StampedPath> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        StampedPath entry;
        if (!(ls >> entry.timestamp >> entry.path)) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed entry");
        }
        entries.push_back(std::move(entry));
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const StampedPath& a, const StampedPath& b) {
                         return a.timestamp < b.timestamp;
                     });
    return entries;
}

std::vector<std::pair<std::size_t, std::size_t>> MatchTimestamps(const std::vector<double>& a,
                                                                 const std::vector<double>& b,
                                                                 double max_dt) {
    struct Candidate {
        double dt;
        std::size_t i, j;
    };
    std::vector<Candidate> candidates;
    std::size_t lo = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        while (lo < b.size() && b[lo] < a[i] - max_dt) ++lo;
        for (std::size_t j = lo; j < b.size() && b[j] <= a[i] + max_dt; ++j) {
            candidates.push_back({std::abs(a[i] - b[j]), i, j});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
        return std::tie(x.dt, x.i, x.j) < std::tie(y.dt, y.i, y.j);
    });
    std::vector<bool> used_a(a.size(), false), used_b(b.size(), false);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (const Candidate& c : candidates) {
        if (used_a[c.i] || used_b[c.j]) continue;
        used_a[c.i] = true;
        used_b[c.j] = true;
        pairs.emplace_back(c.i, c.j);
    }
    std::sort(pairs.begin(), pairs.end(), [&](const auto& x, const auto& y) {
        return a[x.first] < a[y.first];
    });
    return pairs;
}

SequenceManifest LoadSequenceDir(const std::string& dir, double max_dt) {
    SequenceManifest manifest;
    manifest.root = dir;
    const fs::path root(dir);
    if (!fs::is_directory(root)) throw std::runtime_error("not a directory: " + dir);
    const std::vector<StampedPath> rgb = ReadFileList((root / "rgb.txt").string());
    const std::vector<StampedPath> depth = ReadFileList((root / "depth.txt").string());
    if (fs::exists(root / "intrinsics.txt")) {
        manifest.intrinsics = ReadIntrinsicsFile((root / "intrinsics.txt").string());
    }
    std::vector<StampedPath> labels;
    if (fs::exists(root / "labels.txt")) {
        labels = ReadFileList((root / "labels.txt").string());
    }

    std::vector<double> rgb_times(rgb.size()), depth_times(depth.size());
    for (std::size_t i = 0; i < rgb.size(); ++i) rgb_times[i] = rgb[i].timestamp;
    for (std::size_t j = 0; j < depth.size(); ++j) depth_times[j] = depth[j].timestamp;
    const auto pairs = MatchTimestamps(rgb_times, depth_times, max_dt);
    if (pairs.empty()) {
        throw std::runtime_error("no rgb/depth pairs within " + std::to_string(max_dt) +
                                 " s in " + dir);
    }
    std::vector<double> label_times(labels.size());
    for (std::size_t k = 0; k < labels.size(); ++k) label_times[k] = labels[k].timestamp;

    for (const auto& [i, j] : pairs) {
        AssociatedFrame frame;
        frame.timestamp = rgb[i].timestamp;
        frame.rgb_path = rgb[i].path;
        frame.depth_path = depth[j].path;
        if (!labels.empty()) {
            const auto it = std::min_element(
                label_times.begin(), label_times.end(), [&](double x, double y) {
                    return std::abs(x - frame.timestamp) < std::abs(y - frame.timestamp);
                });
            if (std::abs(*it - frame.timestamp) <= max_dt) {
                frame.label_path = labels[it - label_times.begin()].path;
            }
        }
        manifest.frames.push_back(std::move(frame));
    }
    return manifest;
}

Frame LoadFrame(const SequenceManifest& manifest, std::size_t index) {
    if (index >= manifest.frames.size()) throw std::out_of_range("frame index out of range");
    const AssociatedFrame& entry = manifest.frames[index];
    Frame frame;
    frame.timestamp = entry.timestamp;
    frame.intrinsics = manifest.intrinsics;
    frame.color = ReadPngRgb8((fs::path(manifest.root) / entry.rgb_path).string());
    const Image<std::uint16_t> raw =
        ReadPng16((fs::path(manifest.root) / entry.depth_path).string());
    frame.depth = DecodeDepth(raw, manifest.intrinsics.depth_scale);
    if (!frame.SizesConsistent()) {
        throw std::runtime_error("image size does not match intrinsics for frame " +
                                 std::to_string(index) + " of " + manifest.root);
    }
    return frame;
}

PixelMask LoadLabelMask(const SequenceManifest& manifest, std::size_t index) {
    if (index >= manifest.frames.size()) throw std::out_of_range("frame index out of range");
    const AssociatedFrame& entry = manifest.frames[index];
    if (entry.label_path.empty()) {
        throw std::runtime_error("frame " + std::to_string(index) + " has no label image");
    }
    const Image<std::uint8_t> raw =
        ReadPngGray8((fs::path(manifest.root) / entry.label_path).string());
    PixelMask mask(raw.width(), raw.height(), 0);
    for (int y = 0; y < raw.height(); ++y) {
        for (int x = 0; x < raw.width(); ++x) mask(x, y) = raw(x, y) ? 1 : 0;
    }
    return mask;
}

Trajectory ReadTrajectory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trajectory: " + path);
    Trajectory trajectory;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        double t, tx, ty, tz, qx, qy, qz, qw;
        if (!(ls >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": malformed trajectory line");
        }
        Eigen::Quaterniond q(qw, qx, qy, qz);
        if (std::abs(q.norm() - 1.0) > 1e-3) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": quaternion norm is not 1");
        }
        q.normalize();
        trajectory.push_back({t, Pose(q, Eigen::Vector3d(tx, ty, tz))});
    }
    return trajectory;
}

void WriteTrajectory(const std::string& path, const Trajectory& trajectory) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "# timestamp tx ty tz qx qy qz qw\n";
    char buf[256];
    for (const TrajectoryEntry& entry : trajectory) {
        const Eigen::Vector3d& t = entry.pose.translation();
        const Eigen::Quaterniond q = entry.pose.quaternion();
        std::snprintf(buf, sizeof(buf),
                      "%.6f %.12f %.12f %.12f %.12f %.12f %.12f %.12f\n", entry.timestamp,
                      t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

CameraIntrinsics ReadIntrinsicsFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open intrinsics: " + path);
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        CameraIntrinsics k;
        if (!(ls >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height >> k.depth_scale)) {
            throw std::runtime_error("malformed intrinsics in " + path);
        }
        if (!k.Valid()) throw std::runtime_error("invalid intrinsics in " + path);
        return k;
    }
    throw std::runtime_error("no intrinsics found in " + path);
}

void WriteIntrinsicsFile(const std::string& path, const CameraIntrinsics& intrinsics) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "# fx fy cx cy width height depth_scale\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.9f %.9f %.9f %.9f %d %d %.6f\n", intrinsics.fx,
                  intrinsics.fy, intrinsics.cx, intrinsics.cy, intrinsics.width, intrinsics.height,
                  intrinsics.depth_scale);
    out << buf;
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace tsdfslam
