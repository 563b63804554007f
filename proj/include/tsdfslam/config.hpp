#pragma once

#include <string>

#include "tsdfslam/dynamics_mask.hpp"
#include "tsdfslam/depth_refinement.hpp"
#include "tsdfslam/registration.hpp"
#include "tsdfslam/tsdf_volume.hpp"

namespace tsdfslam {

struct PipelineConfig {
    VolumeConfig volume;
    RegistrationConfig registration;
    MaskConfig mask;
    RefinementConfig refinement;
    bool dynamics_enabled = true;
    int threads = 1;
    double max_dt = 0.02;  // timestamp association tolerance, seconds

    // Keeps derived fields consistent (the mask threshold scales with the
    // volume truncation) and validates everything.
    void Sync();
};

// key = value lines, '#' comments, unknown keys rejected. Keys:
//   voxel_size truncation block_side max_weight carve_weight min_depth
//   max_depth carve_clip max_blocks color_weight pyramid_levels
//   max_iterations lm_lambda_init lm_lambda_up lm_lambda_down
//   convergence_eps min_valid_residuals gamma theta erode_radius
//   dilate_radius connectivity refine_depth refine_window far_value
//   dynamics threads max_dt
PipelineConfig ParseConfig(const std::string& text, const std::string& source_name);
PipelineConfig ParseConfigFile(const std::string& path);
void WriteConfigFile(const std::string& path, const PipelineConfig& config);

}  // namespace tsdfslam
