#include "tsdfslam/depth_refinement.hpp"

#include <stdexcept>
#include <utility>

#include "tsdfslam/parallel.hpp"

namespace tsdfslam {

void FrameWindow::Push(WindowEntry entry) {
    if (Full()) throw std::logic_error("frame window is full");
    entries_.push_back(std::move(entry));
}

WindowEntry FrameWindow::PopFront() {
    if (entries_.empty()) throw std::logic_error("frame window is empty");
    WindowEntry entry = std::move(entries_.front());
    entries_.pop_front();
    return entry;
}

DepthImage RenderVirtualDepth(const FrameWindow& window, const Pose& view_pose,
                              const CameraIntrinsics& intrinsics, const VolumeConfig& volume_config,
                              const RefinementConfig& config, int threads) {
    TsdfVolume temp(volume_config);
    for (const WindowEntry& entry : window.entries()) {
        const PixelMask* mask = entry.mask.Empty() ? nullptr : &entry.mask;
        temp.AllocateForFrame(entry.frame.depth, entry.frame.intrinsics, entry.pose, mask);
        temp.Integrate(entry.frame, entry.pose, mask, threads);
    }

    const double step = volume_config.truncation / 2.0;
    const double z_begin = volume_config.min_depth;
    const double z_end = volume_config.max_depth;
    DepthImage out(intrinsics.width, intrinsics.height, 0.f);
    ParallelFor(static_cast<std::size_t>(intrinsics.height), threads, [&](std::size_t row) {
        const int v = static_cast<int>(row);
        for (int u = 0; u < intrinsics.width; ++u) {
            const Eigen::Vector3d dir((u - intrinsics.cx) / intrinsics.fx,
                                      (v - intrinsics.cy) / intrinsics.fy, 1.0);
            double prev_z = 0.0;
            double prev_sdf = 0.0;
            bool prev_valid = false;
            for (double z = z_begin; z <= z_end; z += step) {
                const SdfSample s = temp.SampleSdf(view_pose * (z * dir));
                if (!s.valid) {
                    prev_valid = false;
                    continue;
                }
                if (prev_valid && prev_sdf > 0.0 && s.value <= 0.0) {
                    double lo = prev_z, hi = z;
                    double lo_sdf = prev_sdf;
                    for (int it = 0; it < config.bisection_iterations; ++it) {
                        const double mid = 0.5 * (lo + hi);
                        const SdfSample m = temp.SampleSdf(view_pose * (mid * dir));
                        if (!m.valid) break;
                        if (m.value > 0.0) {
                            lo = mid;
                            lo_sdf = m.value;
                        } else {
                            hi = mid;
                        }
                    }
                    // Linear interpolation inside the final bracket.
                    const SdfSample hi_sample = temp.SampleSdf(view_pose * (hi * dir));
                    double crossing = 0.5 * (lo + hi);
                    if (hi_sample.valid && lo_sdf - hi_sample.value > 1e-12) {
                        crossing = lo + (hi - lo) * lo_sdf / (lo_sdf - hi_sample.value);
                    }
                    out(u, v) = static_cast<float>(crossing);
                    break;
                }
                prev_z = z;
                prev_sdf = s.value;
                prev_valid = true;
            }
        }
    });
    return out;
}

DepthImage RefineDepth(const DepthImage& raw, const DepthImage& virtual_depth, double far_value) {
    if (!raw.SameSize(virtual_depth)) throw std::invalid_argument("depth size mismatch");
    DepthImage out = raw;
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            if (DepthValid(out(x, y))) continue;
            const float virt = virtual_depth(x, y);
            out(x, y) = DepthValid(virt) ? virt : static_cast<float>(far_value);
        }
    }
    return out;
}

}  // namespace tsdfslam
