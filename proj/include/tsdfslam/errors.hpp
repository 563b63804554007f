#pragma once

#include <stdexcept>
#include <string>

namespace tsdfslam {

// Registration could not find enough valid residuals to constrain the pose.
struct InsufficientOverlapError : std::runtime_error {
    explicit InsufficientOverlapError(const std::string& what) : std::runtime_error(what) {}
};

// Registration failed at the coarsest pyramid level; the caller decides policy.
struct TrackingLostError : std::runtime_error {
    explicit TrackingLostError(const std::string& what) : std::runtime_error(what) {}
};

// A hard cap (e.g. the voxel block budget) was exceeded.
struct ResourceLimitError : std::runtime_error {
    explicit ResourceLimitError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tsdfslam
