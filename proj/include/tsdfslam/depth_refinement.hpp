#pragma once

#include <cstddef>
#include <deque>

#include "tsdfslam/geometry.hpp"
#include "tsdfslam/image.hpp"
#include "tsdfslam/tsdf_volume.hpp"

namespace tsdfslam {

struct RefinementConfig {
    bool enabled = true;
    int window = 10;          // consecutive frames fused into the temporary volume
    double far_value = 8.0;   // meters, assigned where neither raw nor virtual depth exists
    int bisection_iterations = 8;
};

// Registered frame waiting for integration while newer frames accumulate.
struct WindowEntry {
    Frame frame;
    Pose pose = Pose::Identity();
    PixelMask mask;  // dynamics mask at registration time, may be empty
};

// FIFO of registered-but-not-yet-integrated frames.
class FrameWindow {
  public:
    explicit FrameWindow(std::size_t capacity) : capacity_(capacity) {}

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return entries_.size(); }
    bool Empty() const { return entries_.empty(); }
    bool Full() const { return entries_.size() >= capacity_; }

    void Push(WindowEntry entry);
    WindowEntry PopFront();

    const std::deque<WindowEntry>& entries() const { return entries_; }

  private:
    std::size_t capacity_;
    std::deque<WindowEntry> entries_;
};

// Fuses the window frames (with their masks) into a temporary volume and
// ray-marches it from the given view: step truncation/2 along the ray,
// bisection once the interpolated distance changes sign. Pixels without a
// front-to-back zero crossing stay invalid (0).
DepthImage RenderVirtualDepth(const FrameWindow& window, const Pose& view_pose,
                              const CameraIntrinsics& intrinsics, const VolumeConfig& volume_config,
                              const RefinementConfig& config, int threads = 1);

// Keeps valid raw depth, fills invalid pixels from the virtual depth, and
// assigns far_value where both are missing so later carving treats the pixel
// as observed free space.
DepthImage RefineDepth(const DepthImage& raw, const DepthImage& virtual_depth, double far_value);

}  // namespace tsdfslam
