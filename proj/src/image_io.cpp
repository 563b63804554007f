#include "tsdfslam/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace tsdfslam {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void Fail(const std::string& path, const char* what) {
    throw std::runtime_error(std::string(what) + ": " + path);
}

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

// Decodes a PNG into rows of the requested libpng color type / bit depth.
template <typename Pixel>
Image<Pixel> ReadPngAs(const std::string& path, int want_color, int want_depth) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) Fail(path, "cannot open image");

    png_byte header[8] = {};
    if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
        Fail(path, "not a PNG file");

    PngReader ctx;
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) Fail(path, "png init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) Fail(path, "png init failed");
    if (setjmp(png_jmpbuf(ctx.png))) Fail(path, "png decode failed");

    png_init_io(ctx.png, file.get());
    png_set_sig_bytes(ctx.png, 8);
    png_read_info(ctx.png, ctx.info);

    const int width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
    const int height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
    int color = png_get_color_type(ctx.png, ctx.info);
    int depth = png_get_bit_depth(ctx.png, ctx.info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
    if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
    if (want_color == PNG_COLOR_TYPE_RGB) {
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_gray_to_rgb(ctx.png);
        png_set_strip_alpha(ctx.png);
        if (depth == 16) png_set_strip_16(ctx.png);
    } else {  // grayscale target
        if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA)
            png_set_rgb_to_gray_fixed(ctx.png, 1, -1, -1);
        png_set_strip_alpha(ctx.png);
        if (want_depth == 8 && depth == 16) png_set_strip_16(ctx.png);
        if (want_depth == 16 && depth == 16) png_set_swap(ctx.png);  // PNG is big-endian
        if (want_depth == 16 && depth < 16) Fail(path, "expected 16-bit PNG");
    }
    png_set_interlace_handling(ctx.png);
    png_read_update_info(ctx.png, ctx.info);

    if (png_get_rowbytes(ctx.png, ctx.info) != static_cast<std::size_t>(width) * sizeof(Pixel))
        Fail(path, "unexpected PNG layout");

    Image<Pixel> image(width, height);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = reinterpret_cast<png_bytep>(image.Row(y));
    png_read_image(ctx.png, rows.data());
    png_read_end(ctx.png, nullptr);
    return image;
}

template <typename Pixel>
void WritePngAs(const Image<Pixel>& image, const std::string& path, int color, int depth,
                bool swap16) {
    if (image.Empty()) throw std::runtime_error("refusing to write empty image: " + path);
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) Fail(path, "cannot open image for writing");

    PngWriter ctx;
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) Fail(path, "png init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) Fail(path, "png init failed");
    if (setjmp(png_jmpbuf(ctx.png))) Fail(path, "png encode failed");

    png_init_io(ctx.png, file.get());
    png_set_IHDR(ctx.png, ctx.info, image.width(), image.height(), depth, color,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    if (swap16) png_set_swap(ctx.png);

    for (int y = 0; y < image.height(); ++y) {
        png_write_row(ctx.png,
                      reinterpret_cast<png_const_bytep>(const_cast<Pixel*>(image.Row(y))));
    }
    png_write_end(ctx.png, nullptr);
}

}  // namespace

Image<std::uint16_t> ReadPng16(const std::string& path) {
    return ReadPngAs<std::uint16_t>(path, PNG_COLOR_TYPE_GRAY, 16);
}

void WritePng16(const Image<std::uint16_t>& image, const std::string& path) {
    WritePngAs(image, path, PNG_COLOR_TYPE_GRAY, 16, true);
}

ColorImage ReadPngRgb8(const std::string& path) {
    static_assert(sizeof(Rgb8) == 3);
    return ReadPngAs<Rgb8>(path, PNG_COLOR_TYPE_RGB, 8);
}

void WritePngRgb8(const ColorImage& image, const std::string& path) {
    WritePngAs(image, path, PNG_COLOR_TYPE_RGB, 8, false);
}

Image<std::uint8_t> ReadPngGray8(const std::string& path) {
    return ReadPngAs<std::uint8_t>(path, PNG_COLOR_TYPE_GRAY, 8);
}

void WritePngGray8(const Image<std::uint8_t>& image, const std::string& path) {
    WritePngAs(image, path, PNG_COLOR_TYPE_GRAY, 8, false);
}

DepthImage DecodeDepth(const Image<std::uint16_t>& raw, double depth_scale) {
    DepthImage depth(raw.width(), raw.height());
    const float inv = static_cast<float>(1.0 / depth_scale);
    for (std::size_t i = 0; i < raw.PixelCount(); ++i)
        depth.data()[i] = raw.data()[i] == 0 ? 0.0f : static_cast<float>(raw.data()[i]) * inv;
    return depth;
}

Image<std::uint16_t> EncodeDepth(const DepthImage& depth, double depth_scale) {
    Image<std::uint16_t> raw(depth.width(), depth.height());
    for (std::size_t i = 0; i < depth.PixelCount(); ++i) {
        const float d = depth.data()[i];
        if (!DepthValid(d)) {
            raw.data()[i] = 0;
            continue;
        }
        const double units = std::round(static_cast<double>(d) * depth_scale);
        raw.data()[i] = static_cast<std::uint16_t>(std::min(units, 65535.0));
    }
    return raw;
}

}  // namespace tsdfslam
