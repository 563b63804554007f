#include "tsdfslam/registration.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tsdfslam/errors.hpp"
#include "tsdfslam/parallel.hpp"

namespace tsdfslam {

namespace {

using Matrix6 = Eigen::Matrix<double, 6, 6>;
using Vector6 = Eigen::Matrix<double, 6, 1>;

// Photometric residuals are normalized to [0, 1] so that the default w_c
// balances them against squared-meter distance residuals.
constexpr double kIntensityScale = 1.0 / 255.0;

// An accepted step that shaves off less than this fraction of the error
// counts as stationary.
constexpr double kRelativeDecreaseTol = 1e-6;

struct Accum {
    Matrix6 H = Matrix6::Zero();
    Vector6 b = Vector6::Zero();
    double depth_error = 0.0;
    double color_error = 0.0;
    std::size_t valid = 0;
};

Accum CombineAccum(Accum a, const Accum& b) {
    a.H += b.H;
    a.b += b.b;
    a.depth_error += b.depth_error;
    a.color_error += b.color_error;
    a.valid += b.valid;
    return a;
}

// One pass over a pyramid level: residual sums, optionally the normal
// equations, optionally the per-pixel squared depth residuals. Rows are the
// reduction chunks; the fold order is fixed so results do not depend on the
// thread count.
Accum Accumulate(const TsdfVolume& volume, const PyramidLevel& level, const Pose& pose,
                 double color_weight, bool with_jacobian, bool use_mask, int threads,
                 ResidualImage* out) {
    const bool use_color = color_weight > 0.0 && !level.intensity.Empty();
    const bool has_mask = use_mask && !level.mask.Empty();
    const double min_depth = volume.config().min_depth;
    const double max_depth = volume.config().max_depth;
    if (out) {
        out->squared = Image<float>(level.depth.width(), level.depth.height(), 0.f);
        out->valid = PixelMask(level.depth.width(), level.depth.height(), 0);
    }
    return OrderedReduce(
        static_cast<std::size_t>(level.depth.height()), threads, Accum{},
        [&](std::size_t row) {
            Accum acc;
            const int v = static_cast<int>(row);
            for (int u = 0; u < level.depth.width(); ++u) {
                const float d = level.depth(u, v);
                if (!DepthValid(d) || d < min_depth || d > max_depth) continue;
                const bool masked = has_mask && level.mask(u, v) != 0;
                if (masked && !out) continue;
                const Eigen::Vector3d x = Backproject(u, v, d, level.intrinsics);
                const Eigen::Vector3d y = pose * x;
                if (with_jacobian && !masked) {
                    const SdfGradientSample sdf = volume.SampleSdfWithGradient(y);
                    if (!sdf.valid) continue;
                    const double r_d = sdf.value;
                    Vector6 J_d;
                    J_d << sdf.gradient, y.cross(sdf.gradient);
                    acc.H.noalias() += J_d * J_d.transpose();
                    acc.b.noalias() += J_d * r_d;
                    acc.depth_error += r_d * r_d;
                    if (use_color) {
                        const SdfGradientSample inten = volume.SampleIntensityWithGradient(y);
                        const double r_c = (inten.value - level.intensity(u, v)) * kIntensityScale;
                        Vector6 J_c;
                        J_c << inten.gradient, y.cross(inten.gradient);
                        J_c *= kIntensityScale;
                        acc.H.noalias() += color_weight * (J_c * J_c.transpose());
                        acc.b.noalias() += color_weight * (J_c * r_c);
                        acc.color_error += r_c * r_c;
                    }
                    ++acc.valid;
                    if (out) {
                        out->squared(u, v) = static_cast<float>(r_d * r_d);
                        out->valid(u, v) = 1;
                    }
                } else {
                    const SdfSample sdf = volume.SampleSdf(y);
                    if (!sdf.valid) continue;
                    const double r_d = sdf.value;
                    if (out) {
                        out->squared(u, v) = static_cast<float>(r_d * r_d);
                        out->valid(u, v) = 1;
                    }
                    if (masked) continue;
                    acc.depth_error += r_d * r_d;
                    if (use_color) {
                        const SdfSample inten = volume.SampleIntensity(y);
                        const double r_c = (inten.value - level.intensity(u, v)) * kIntensityScale;
                        acc.color_error += r_c * r_c;
                    }
                    ++acc.valid;
                }
            }
            return acc;
        },
        CombineAccum);
}

PyramidLevel LevelZero(const Frame& frame, const PixelMask* mask) {
    PyramidLevel level;
    level.intrinsics = frame.intrinsics;
    level.depth = frame.depth;
    if (!frame.color.Empty()) level.intensity = ToIntensity(frame.color);
    if (mask) level.mask = *mask;
    return level;
}

LinearizeResult ToResult(const Accum& acc, double color_weight) {
    LinearizeResult res;
    res.H = acc.H;
    res.b = acc.b;
    res.depth_error = acc.depth_error;
    res.color_error = acc.color_error;
    res.error = acc.depth_error + color_weight * acc.color_error;
    res.valid_count = acc.valid;
    Eigen::SelfAdjointEigenSolver<Matrix6> eig(acc.H);
    const double max_ev = eig.eigenvalues().cwiseAbs().maxCoeff();
    res.degenerate = acc.valid == 0 || eig.eigenvalues().minCoeff() <= 1e-12 * std::max(max_ev, 1.0);
    return res;
}

}  // namespace

std::vector<PyramidLevel> BuildPyramid(const Frame& frame, const PixelMask* mask, int levels) {
    if (levels < 1) throw std::invalid_argument("pyramid needs at least one level");
    std::vector<PyramidLevel> pyramid;
    pyramid.reserve(levels);
    pyramid.push_back(LevelZero(frame, mask));
    for (int li = 1; li < levels; ++li) {
        const PyramidLevel& prev = pyramid.back();
        PyramidLevel next;
        next.intrinsics = frame.intrinsics.Scaled(li);
        const int w = next.intrinsics.width;
        const int h = next.intrinsics.height;
        if (w < 1 || h < 1) throw std::invalid_argument("image too small for pyramid level");
        next.depth = DepthImage(w, h, 0.f);
        if (!prev.intensity.Empty()) next.intensity = IntensityImage(w, h, 0.f);
        if (!prev.mask.Empty()) next.mask = PixelMask(w, h, 0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                float closest = 0.f;
                float intensity_sum = 0.f;
                std::uint8_t masked = 0;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const int sx = 2 * x + dx;
                        const int sy = 2 * y + dy;
                        const float d = prev.depth(sx, sy);
                        if (DepthValid(d) && (!DepthValid(closest) || d < closest)) closest = d;
                        if (!prev.intensity.Empty()) intensity_sum += prev.intensity(sx, sy);
                        if (!prev.mask.Empty() && prev.mask(sx, sy)) masked = 1;
                    }
                }
                next.depth(x, y) = closest;
                if (!next.intensity.Empty()) next.intensity(x, y) = intensity_sum * 0.25f;
                if (!next.mask.Empty()) next.mask(x, y) = masked;
            }
        }
        pyramid.push_back(std::move(next));
    }
    return pyramid;
}

LinearizeResult Linearize(const TsdfVolume& volume, const Frame& frame, const Pose& pose,
                          const RegistrationConfig& config, const PixelMask* mask) {
    const PyramidLevel level = LevelZero(frame, mask);
    const Accum acc = Accumulate(volume, level, pose, config.color_weight, true, true,
                                 config.threads, nullptr);
    return ToResult(acc, config.color_weight);
}

std::pair<double, ResidualImage> EvaluateDepthError(const TsdfVolume& volume, const Frame& frame,
                                                    const Pose& pose, const PixelMask* mask,
                                                    int threads) {
    PyramidLevel level;
    level.intrinsics = frame.intrinsics;
    level.depth = frame.depth;
    if (mask) level.mask = *mask;
    ResidualImage residuals;
    const Accum acc = Accumulate(volume, level, pose, 0.0, false, true, threads, &residuals);
    return {acc.depth_error, std::move(residuals)};
}

double EvaluateColorError(const TsdfVolume& volume, const Frame& frame, const Pose& pose,
                          const PixelMask* mask, int threads) {
    const PyramidLevel level = LevelZero(frame, mask);
    const Accum acc = Accumulate(volume, level, pose, 1.0, false, true, threads, nullptr);
    return acc.color_error;
}

RegistrationResult Register(const TsdfVolume& volume, const Frame& frame, const Pose& initial_pose,
                            const PixelMask* mask, const RegistrationConfig& config) {
    if (config.pyramid_levels < 1) throw std::invalid_argument("pyramid_levels must be >= 1");
    if (config.max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
    const std::vector<PyramidLevel> pyramid = BuildPyramid(frame, mask, config.pyramid_levels);

    Pose pose = initial_pose;
    bool converged = false;
    int total_iterations = 0;
    Accum current;
    for (int li = config.pyramid_levels - 1; li >= 0; --li) {
        const PyramidLevel& level = pyramid[li];
        // The residual-count floor shrinks with the level's pixel count.
        const std::size_t min_valid = std::max<std::size_t>(
            static_cast<std::size_t>(std::max(config.min_valid_residuals, 1)) >> (2 * li), 16);
        current = Accumulate(volume, level, pose, config.color_weight, true, true, config.threads,
                             nullptr);
        if (current.valid < min_valid) {
            throw TrackingLostError("only " + std::to_string(current.valid) +
                                    " valid residuals at pyramid level " + std::to_string(li));
        }
        double lambda = config.lm_lambda_init;
        converged = false;
        for (int it = 0; it < config.max_iterations; ++it) {
            ++total_iterations;
            // The damping floor is tied to the strongest diagonal entry so
            // that weakly constrained directions are bounded too; pure
            // multiplicative damping would let the solution run freely along
            // near-null directions of H no matter how large lambda gets.
            const double floor = 1e-3 * current.H.diagonal().maxCoeff() + 1e-12;
            Matrix6 damped = current.H;
            damped.diagonal() += lambda * current.H.diagonal().cwiseMax(floor);
            const Eigen::LDLT<Matrix6> ldlt(damped);
            const Vector6 delta = ldlt.solve(-current.b);
            if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
                lambda = std::min(lambda * config.lm_lambda_up, 1e12);
                continue;
            }
            const Pose candidate = ExpMap(Twist(delta)) * pose;
            const Accum trial = Accumulate(volume, level, candidate, config.color_weight, true,
                                           true, config.threads, nullptr);
            const double current_error =
                current.depth_error + config.color_weight * current.color_error;
            const double trial_error = trial.depth_error + config.color_weight * trial.color_error;
            if (trial.valid >= min_valid && trial_error < current_error) {
                const double decrease = current_error - trial_error;
                pose = candidate;
                current = trial;
                lambda = std::max(lambda / config.lm_lambda_down, 1e-12);
                if (delta.norm() < config.convergence_eps ||
                    decrease < kRelativeDecreaseTol * current_error) {
                    converged = true;
                    break;
                }
            } else {
                lambda = std::min(lambda * config.lm_lambda_up, 1e12);
                if (lambda >= 1e12) {
                    // No damped step improves the error: a stationary point.
                    converged = true;
                    break;
                }
            }
        }
    }

    RegistrationResult result;
    result.pose = pose;
    result.converged = converged;
    result.iterations = total_iterations;
    result.valid_residuals = current.valid;
    result.final_error = current.depth_error + config.color_weight * current.color_error;
    PyramidLevel full = pyramid[0];
    full.mask = PixelMask();
    Accumulate(volume, full, pose, 0.0, false, false, config.threads, &result.residuals);
    return result;
}

}  // namespace tsdfslam
