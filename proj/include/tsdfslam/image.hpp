#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "tsdfslam/geometry.hpp"

namespace tsdfslam {

// Dense row-major pixel grid.
template <typename T>
class Image {
  public:
    Image() = default;
    Image(int width, int height, T fill = T{})
        : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    bool Empty() const { return data_.empty(); }
    std::size_t PixelCount() const { return data_.size(); }

    bool InBounds(int x, int y) const { return x >= 0 && x < width_ && y >= 0 && y < height_; }

    T& operator()(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    const T& operator()(int x, int y) const {
        return data_[static_cast<std::size_t>(y) * width_ + x];
    }

    T* Row(int y) { return data_.data() + static_cast<std::size_t>(y) * width_; }
    const T* Row(int y) const { return data_.data() + static_cast<std::size_t>(y) * width_; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    void Fill(T value) { data_.assign(data_.size(), value); }

    bool SameSize(int w, int h) const { return width_ == w && height_ == h; }
    template <typename U>
    bool SameSize(const Image<U>& other) const {
        return SameSize(other.width(), other.height());
    }

    friend bool operator==(const Image& a, const Image& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
    }

  private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

struct Rgb8 {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;
    friend bool operator==(const Rgb8&, const Rgb8&) = default;
};

// Depth in meters; values <= 0 (and non-finite) are invalid measurements.
using DepthImage = Image<float>;
using ColorImage = Image<Rgb8>;
using IntensityImage = Image<float>;  // range [0, 255]

inline bool DepthValid(float d) { return d > 0.0f && std::isfinite(d); }

// Per-pixel dynamics mask; nonzero marks a pixel as dynamic.
using PixelMask = Image<std::uint8_t>;

inline std::size_t CountMasked(const PixelMask& m) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < m.PixelCount(); ++i) n += m.data()[i] != 0;
    return n;
}

// Rec. 709 luma of an 8-bit color, in [0, 255].
inline double Intensity(const Rgb8& c) {
    return 0.2126 * static_cast<double>(c.r) + 0.7152 * static_cast<double>(c.g) +
           0.0722 * static_cast<double>(c.b);
}

inline IntensityImage ToIntensity(const ColorImage& color) {
    IntensityImage out(color.width(), color.height());
    for (std::size_t i = 0; i < color.PixelCount(); ++i) {
        out.data()[i] = static_cast<float>(Intensity(color.data()[i]));
    }
    return out;
}

// One RGB-D measurement.
struct Frame {
    double timestamp = 0.0;
    CameraIntrinsics intrinsics;
    DepthImage depth;
    ColorImage color;

    bool SizesConsistent() const {
        return depth.SameSize(intrinsics.width, intrinsics.height) && color.SameSize(depth);
    }
};

}  // namespace tsdfslam
