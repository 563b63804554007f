#pragma once

#include <Eigen/Core>
#include <vector>

#include "tsdfslam/dataset_io.hpp"
#include "tsdfslam/geometry.hpp"
#include "tsdfslam/spatial_hash.hpp"

namespace tsdfslam {

struct AteResult {
    double rmse = 0.0;
    Pose alignment;  // rigid transform mapping estimated into ground truth
    std::size_t pairs = 0;
};

// Associates the trajectories by timestamp, rigidly aligns the estimated
// translations onto the ground truth (closed-form, no scale), and reports
// the root-mean-square residual. Throws when fewer than 3 pairs associate.
AteResult AteRmse(const Trajectory& estimated, const Trajectory& ground_truth,
                  double max_dt = 0.02);

struct RpeSample {
    double timestamp = 0.0;
    double translation_error = 0.0;  // meters over the delta interval
};

// Relative pose error of the translation over fixed time intervals: for each
// associated pose at time t with a partner at t + delta (within max_dt), the
// norm of the translational part of (gt_rel^-1 * est_rel).
std::vector<RpeSample> RpeOverTime(const Trajectory& estimated, const Trajectory& ground_truth,
                                   double delta = 1.0, double max_dt = 0.02);

// Exact nearest-neighbor distances via a uniform grid searched in expanding
// shells. Throws when reference is empty.
std::vector<double> NearestDistances(const std::vector<Eigen::Vector3f>& queries,
                                     const std::vector<Eigen::Vector3f>& reference,
                                     int threads = 1);

// Cumulative percentage of distances at or below each bin edge. Edges must
// be ascending.
std::vector<double> DistanceCdf(const std::vector<double>& distances,
                                const std::vector<double>& bin_edges);

}  // namespace tsdfslam
