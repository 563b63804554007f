#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "tsdfslam/config.hpp"
#include "tsdfslam/dataset_io.hpp"
#include "tsdfslam/depth_refinement.hpp"
#include "tsdfslam/dynamics_mask.hpp"
#include "tsdfslam/registration.hpp"
#include "tsdfslam/tsdf_volume.hpp"

namespace tsdfslam {

struct FrameStats {
    std::size_t frame_index = 0;
    double timestamp = 0.0;
    bool tracking_lost = false;
    bool converged = false;
    int registrations = 0;  // 1 without dynamics handling, up to 2 with it
    int iterations = 0;
    std::size_t valid_residuals = 0;
    std::size_t masked_pixels = 0;
    double final_error = 0.0;
    double runtime_ms = 0.0;
};

// Per-frame artifacts offered to an observer (for dumps and tests). Pointers
// are valid only during the callback; null when the stage did not run.
struct FrameDebug {
    std::size_t frame_index = 0;
    double timestamp = 0.0;
    const PixelMask* mask = nullptr;
    const ResidualImage* residuals = nullptr;
    const DepthImage* virtual_depth = nullptr;  // for the frame being integrated
    const DepthImage* refined_depth = nullptr;
};

// Frame-by-frame SLAM front end over a voxel-hashed distance volume.
//
// Per frame: integrate the oldest pending frame with refined depth (when
// depth refinement is on and its window is full), register the new frame
// without a mask, build the dynamics mask from the residuals, register again
// under the mask, then carve free space and integrate (immediately, or
// deferred through the refinement window). The first frame is integrated
// directly at the identity pose. A frame whose registration fails keeps the
// previous pose, is flagged, and is not integrated.
class Pipeline {
  public:
    explicit Pipeline(PipelineConfig config);

    FrameStats ProcessFrame(const Frame& frame);

    // Flushes frames still pending in the refinement window. Call once after
    // the last frame.
    void Finalize();

    const Trajectory& trajectory() const { return trajectory_; }
    const TsdfVolume& volume() const { return volume_; }
    const std::vector<FrameStats>& stats() const { return stats_; }
    const PipelineConfig& config() const { return config_; }
    std::size_t tracking_losses() const { return losses_; }

    void set_debug_sink(std::function<void(const FrameDebug&)> sink) {
        debug_sink_ = std::move(sink);
    }

  private:
    void IntegrateFront();
    void CarveAndIntegrate(const Frame& frame, const Pose& pose, const PixelMask* mask);

    PipelineConfig config_;
    TsdfVolume volume_;
    FrameWindow window_;
    std::deque<std::size_t> pending_indices_;
    Trajectory trajectory_;
    std::vector<FrameStats> stats_;
    Pose current_pose_;
    bool first_ = true;
    std::size_t frame_count_ = 0;
    std::size_t losses_ = 0;
    std::function<void(const FrameDebug&)> debug_sink_;
};

using FrameSource = std::function<std::optional<Frame>()>;

struct SequenceSummary {
    std::size_t frames = 0;
    std::size_t tracking_losses = 0;
};

// Pulls frames from the source until it is exhausted, then finalizes.
SequenceSummary RunSequence(Pipeline& pipeline, const FrameSource& source);

}  // namespace tsdfslam
