#include "tsdfslam/pipeline.hpp"

#include <chrono>
#include <stdexcept>
#include <utility>

#include "tsdfslam/errors.hpp"

namespace tsdfslam {

namespace {

PipelineConfig Synced(PipelineConfig config) {
    config.Sync();
    return config;
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config)
    : config_(Synced(std::move(config))),
      volume_(config_.volume),
      window_(static_cast<std::size_t>(config_.refinement.window)) {}

void Pipeline::CarveAndIntegrate(const Frame& frame, const Pose& pose, const PixelMask* mask) {
    volume_.CarveFreeSpace(frame.depth, frame.intrinsics, pose, config_.threads);
    volume_.AllocateForFrame(frame.depth, frame.intrinsics, pose, mask);
    volume_.Integrate(frame, pose, mask, config_.threads);
}

void Pipeline::IntegrateFront() {
    const WindowEntry& front = window_.entries().front();
    const DepthImage virtual_depth =
        RenderVirtualDepth(window_, front.pose, front.frame.intrinsics, config_.volume,
                           config_.refinement, config_.threads);
    const DepthImage refined =
        RefineDepth(front.frame.depth, virtual_depth, config_.refinement.far_value);

    WindowEntry entry = window_.PopFront();
    const std::size_t index = pending_indices_.front();
    pending_indices_.pop_front();

    Frame refined_frame = std::move(entry.frame);
    refined_frame.depth = refined;
    CarveAndIntegrate(refined_frame, entry.pose, entry.mask.Empty() ? nullptr : &entry.mask);

    if (debug_sink_) {
        FrameDebug debug;
        debug.frame_index = index;
        debug.timestamp = refined_frame.timestamp;
        debug.virtual_depth = &virtual_depth;
        debug.refined_depth = &refined;
        debug_sink_(debug);
    }
}

FrameStats Pipeline::ProcessFrame(const Frame& frame) {
    if (!frame.intrinsics.Valid() || !frame.SizesConsistent()) {
        throw std::invalid_argument("frame images do not match the intrinsics");
    }
    const auto start = std::chrono::steady_clock::now();
    FrameStats stats;
    stats.frame_index = frame_count_;
    stats.timestamp = frame.timestamp;

    if (first_) {
        // Bootstrap: the identity pose defines the world frame, the model is
        // seeded directly so the next frames have something to track against.
        const Pose pose = Pose::Identity();
        volume_.AllocateForFrame(frame.depth, frame.intrinsics, pose);
        volume_.Integrate(frame, pose, nullptr, config_.threads);
        trajectory_.push_back({frame.timestamp, pose});
        current_pose_ = pose;
        first_ = false;
        stats.converged = true;
    } else {
        if (config_.refinement.enabled && window_.Full()) IntegrateFront();

        PixelMask mask;
        try {
            RegistrationResult reg =
                Register(volume_, frame, current_pose_, nullptr, config_.registration);
            stats.registrations = 1;
            stats.iterations = reg.iterations;
            if (config_.dynamics_enabled) {
                mask = BuildMask(reg.residuals, frame.depth, config_.mask);
                stats.masked_pixels = CountMasked(mask);
                if (stats.masked_pixels > 0) {
                    RegistrationResult masked_reg =
                        Register(volume_, frame, reg.pose, &mask, config_.registration);
                    stats.registrations = 2;
                    stats.iterations += masked_reg.iterations;
                    reg = std::move(masked_reg);
                }
            }
            stats.converged = reg.converged;
            stats.valid_residuals = reg.valid_residuals;
            stats.final_error = reg.final_error;
            trajectory_.push_back({frame.timestamp, reg.pose});
            current_pose_ = reg.pose;

            if (debug_sink_) {
                FrameDebug debug;
                debug.frame_index = frame_count_;
                debug.timestamp = frame.timestamp;
                debug.mask = mask.Empty() ? nullptr : &mask;
                debug.residuals = &reg.residuals;
                debug_sink_(debug);
            }

            if (config_.refinement.enabled) {
                window_.Push({frame, reg.pose, std::move(mask)});
                pending_indices_.push_back(frame_count_);
            } else {
                CarveAndIntegrate(frame, reg.pose, mask.Empty() ? nullptr : &mask);
            }
        } catch (const TrackingLostError&) {
            // Hold the previous pose, skip integration, keep going.
            stats.tracking_lost = true;
            ++losses_;
            trajectory_.push_back({frame.timestamp, current_pose_});
        }
    }

    stats.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    ++frame_count_;
    stats_.push_back(stats);
    return stats;
}

void Pipeline::Finalize() {
    while (!window_.Empty()) IntegrateFront();
}

SequenceSummary RunSequence(Pipeline& pipeline, const FrameSource& source) {
    while (true) {
        std::optional<Frame> frame = source();
        if (!frame) break;
        pipeline.ProcessFrame(*frame);
    }
    pipeline.Finalize();
    return {pipeline.stats().size(), pipeline.tracking_losses()};
}

}  // namespace tsdfslam
