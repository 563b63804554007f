#pragma once

#include <vector>

#include "tsdfslam/image.hpp"
#include "tsdfslam/registration.hpp"

namespace tsdfslam {

struct MaskConfig {
    double gamma = 0.5;       // residual threshold factor, threshold = gamma * truncation^2
    double truncation = 0.1;  // meters, must match the volume
    double theta = 0.007;     // relative depth continuity bound for region growing
    int erode_radius = 2;     // square structuring element radius
    int dilate_radius = 2;
    int connectivity = 4;  // 4 or 8, for region growing
};

// Pixels whose squared residual exceeds gamma * truncation^2 (strictly).
// Pixels without a valid residual stay unmasked.
PixelMask ThresholdResiduals(const ResidualImage& residuals, const MaskConfig& config);

// Morphology with a square structuring element of the given radius. Pixels
// outside the image count as unmasked.
PixelMask Erode(const PixelMask& mask, int radius);
PixelMask Dilate(const PixelMask& mask, int radius);

// Region growing from the seed pixels over the depth image: a neighbor n of
// an accepted pixel p joins when |D(p) - D(n)| < theta * D(p). Pixels with
// invalid depth never join. The result is independent of the seed order.
PixelMask FloodfillDepth(const PixelMask& seeds, const DepthImage& depth, double theta,
                         int connectivity);

// Full mask construction: threshold, erode, grow over depth, dilate.
PixelMask BuildMask(const ResidualImage& residuals, const DepthImage& depth,
                    const MaskConfig& config);

// Histogram of valid residual values over [0, max_value]; the last bin also
// collects everything above max_value.
std::vector<std::size_t> ResidualHistogram(const ResidualImage& residuals, int bins,
                                           double max_value);

}  // namespace tsdfslam
