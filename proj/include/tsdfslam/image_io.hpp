#pragma once

#include <cstdint>
#include <string>

#include "tsdfslam/image.hpp"

namespace tsdfslam {

// 16-bit grayscale PNG, the container used for depth and residual images.
Image<std::uint16_t> ReadPng16(const std::string& path);
void WritePng16(const Image<std::uint16_t>& image, const std::string& path);

// 8-bit PNG. Grayscale and RGBA inputs are converted to RGB on read.
ColorImage ReadPngRgb8(const std::string& path);
void WritePngRgb8(const ColorImage& image, const std::string& path);

// 8-bit grayscale PNG, used for masks and label images (values 0 / 255).
Image<std::uint8_t> ReadPngGray8(const std::string& path);
void WritePngGray8(const Image<std::uint8_t>& image, const std::string& path);

// Raw depth <-> metric depth. Zero raw values decode to 0 (invalid).
DepthImage DecodeDepth(const Image<std::uint16_t>& raw, double depth_scale);
Image<std::uint16_t> EncodeDepth(const DepthImage& depth, double depth_scale);

}  // namespace tsdfslam
