#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

#include "tsdfslam/geometry.hpp"
#include "tsdfslam/image.hpp"
#include "tsdfslam/tsdf_volume.hpp"

namespace tsdfslam {

struct RegistrationConfig {
    double color_weight = 0.025;  // weight of the photometric term in the joint objective
    int pyramid_levels = 3;
    int max_iterations = 20;  // per pyramid level, counting rejected steps
    double lm_lambda_init = 1e-4;
    double lm_lambda_up = 10.0;    // multiplier on a rejected step
    double lm_lambda_down = 2.0;   // divisor on an accepted step
    double convergence_eps = 1e-5;
    int min_valid_residuals = 100;
    int threads = 1;
};

// Squared signed-distance residual per pixel; valid where the depth was
// usable and the model could be sampled.
struct ResidualImage {
    Image<float> squared;
    PixelMask valid;
};

struct PyramidLevel {
    CameraIntrinsics intrinsics;
    DepthImage depth;
    IntensityImage intensity;  // empty when the frame has no color
    PixelMask mask;            // empty when no pixels are excluded
};

// Level 0 is the input resolution; each level halves the previous one.
// Depth decimation keeps the closest valid sample of each 2x2 cell,
// intensity is averaged, and a cell is masked if any source pixel is.
std::vector<PyramidLevel> BuildPyramid(const Frame& frame, const PixelMask* mask, int levels);

struct LinearizeResult {
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
    double depth_error = 0.0;
    double color_error = 0.0;
    double error = 0.0;  // depth_error + color_weight * color_error
    std::size_t valid_count = 0;
    bool degenerate = false;  // H rank-deficient before damping
};

// Normal equations of the joint objective at the given pose (twist applied
// on the left). Jacobians use the exact gradient of the trilinear
// interpolant, so finite differences of the objective reproduce b.
LinearizeResult Linearize(const TsdfVolume& volume, const Frame& frame, const Pose& pose,
                          const RegistrationConfig& config, const PixelMask* mask = nullptr);

// Depth term alone at full resolution, plus the per-pixel squared residuals.
// Masked pixels are excluded from the sum but still rendered into the image.
std::pair<double, ResidualImage> EvaluateDepthError(const TsdfVolume& volume, const Frame& frame,
                                                    const Pose& pose,
                                                    const PixelMask* mask = nullptr,
                                                    int threads = 1);

// Photometric term alone at full resolution (unweighted).
double EvaluateColorError(const TsdfVolume& volume, const Frame& frame, const Pose& pose,
                          const PixelMask* mask = nullptr, int threads = 1);

struct RegistrationResult {
    Pose pose = Pose::Identity();
    bool converged = false;  // finest level reached a stationary point

    int iterations = 0;               // LM steps over all levels, rejected included
    std::size_t valid_residuals = 0;  // at the finest level, final pose
    double final_error = 0.0;
    ResidualImage residuals;  // full resolution, final pose, mask ignored
};

// Coarse-to-fine Levenberg-Marquardt alignment of the frame against the
// volume. Throws TrackingLostError when any level has fewer than
// min_valid_residuals usable pixels (a fully masked frame included).
RegistrationResult Register(const TsdfVolume& volume, const Frame& frame, const Pose& initial_pose,
                            const PixelMask* mask, const RegistrationConfig& config);

}  // namespace tsdfslam
