#include "tsdfslam/dynamics_mask.hpp"

#include <algorithm>
#include <deque>
#include <stdexcept>

namespace tsdfslam {

PixelMask ThresholdResiduals(const ResidualImage& residuals, const MaskConfig& config) {
    const double threshold = config.gamma * config.truncation * config.truncation;
    PixelMask mask(residuals.squared.width(), residuals.squared.height(), 0);
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (residuals.valid(x, y) && residuals.squared(x, y) > threshold) mask(x, y) = 1;
        }
    }
    return mask;
}

namespace {

PixelMask Morphology(const PixelMask& mask, int radius, bool erode) {
    if (radius <= 0) return mask;
    PixelMask out(mask.width(), mask.height(), 0);
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            bool value = erode;
            for (int dy = -radius; dy <= radius && value == erode; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int nx = x + dx;
                    const int ny = y + dy;
                    const bool on = mask.InBounds(nx, ny) && mask(nx, ny) != 0;
                    if (erode && !on) {
                        value = false;
                        break;
                    }
                    if (!erode && on) {
                        value = true;
                        break;
                    }
                }
            }
            out(x, y) = value ? 1 : 0;
        }
    }
    return out;
}

}  // namespace

PixelMask Erode(const PixelMask& mask, int radius) {
    return Morphology(mask, radius, true);
}

PixelMask Dilate(const PixelMask& mask, int radius) {
    return Morphology(mask, radius, false);
}

PixelMask FloodfillDepth(const PixelMask& seeds, const DepthImage& depth, double theta,
                         int connectivity) {
    if (connectivity != 4 && connectivity != 8) {
        throw std::invalid_argument("connectivity must be 4 or 8");
    }
    if (!seeds.SameSize(depth)) throw std::invalid_argument("seed/depth size mismatch");
    static constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    static constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};
    PixelMask out(seeds.width(), seeds.height(), 0);
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < seeds.height(); ++y) {
        for (int x = 0; x < seeds.width(); ++x) {
            if (seeds(x, y)) {
                out(x, y) = 1;
                queue.emplace_back(x, y);
            }
        }
    }
    while (!queue.empty()) {
        const auto [x, y] = queue.front();
        queue.pop_front();
        const float dp = depth(x, y);
        if (!DepthValid(dp)) continue;
        const double bound = theta * static_cast<double>(dp);
        for (int k = 0; k < connectivity; ++k) {
            const int nx = x + kDx[k];
            const int ny = y + kDy[k];
            if (!out.InBounds(nx, ny) || out(nx, ny)) continue;
            const float dn = depth(nx, ny);
            if (!DepthValid(dn)) continue;
            if (std::abs(static_cast<double>(dp) - dn) < bound) {
                out(nx, ny) = 1;
                queue.emplace_back(nx, ny);
            }
        }
    }
    return out;
}

PixelMask BuildMask(const ResidualImage& residuals, const DepthImage& depth,
                    const MaskConfig& config) {
    const PixelMask raw = ThresholdResiduals(residuals, config);
    const PixelMask eroded = Erode(raw, config.erode_radius);
    const PixelMask grown = FloodfillDepth(eroded, depth, config.theta, config.connectivity);
    return Dilate(grown, config.dilate_radius);
}

std::vector<std::size_t> ResidualHistogram(const ResidualImage& residuals, int bins,
                                           double max_value) {
    if (bins < 1 || !(max_value > 0)) throw std::invalid_argument("bad histogram shape");
    std::vector<std::size_t> hist(bins, 0);
    for (int y = 0; y < residuals.squared.height(); ++y) {
        for (int x = 0; x < residuals.squared.width(); ++x) {
            if (!residuals.valid(x, y)) continue;
            const double r = residuals.squared(x, y);
            const int bin = std::min(bins - 1, static_cast<int>(r / max_value * bins));
            hist[bin] += 1;
        }
    }
    return hist;
}

}  // namespace tsdfslam
