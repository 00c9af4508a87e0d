#include "belief/image.hpp"

#include "belief/binary_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

namespace belief {

namespace {

struct FileCloser {
    void operator()(std::FILE *f) const {
        if (f) {
            std::fclose(f);
        }
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

void write_png(const std::filesystem::path &path, const ImageD &rgb) {
    if (rgb.channels() != 3) {
        throw Error(ErrorCode::ShapeMismatch, "PNG export expects 3 channels");
    }
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::IoError, "libpng initialization failed");
    }
    std::vector<png_byte> row(static_cast<std::size_t>(rgb.width()) * 3);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::IoError, "libpng write failed for " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, rgb.width(), rgb.height(), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < rgb.height(); ++y) {
        for (int x = 0; x < rgb.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(rgb(y, x, c), 0.0, 1.0);
                row[static_cast<std::size_t>(x) * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

ImageD read_png(const std::filesystem::path &path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::IoError, "libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::FormatError, "not a readable PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    // Normalize every input to 8-bit RGB.
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_gray_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    std::vector<png_byte> row(png_get_rowbytes(png, info));
    ImageD out(height, width, 3);
    for (int y = 0; y < height; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) {
                out(y, x, c) = row[static_cast<std::size_t>(x) * 3 + c] / 255.0;
            }
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void write_float_image(const std::filesystem::path &path, const ImageD &image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    io::put_u32(out, static_cast<std::uint32_t>(image.height()));
    io::put_u32(out, static_cast<std::uint32_t>(image.width()));
    io::put_u32(out, static_cast<std::uint32_t>(image.channels()));
    io::put_u32(out, 0);
    for (double v : image.data()) {
        io::put_f32(out, static_cast<float>(v));
    }
}

ImageD read_float_image(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    const auto h = io::get_u32(in);
    const auto w = io::get_u32(in);
    const auto c = io::get_u32(in);
    io::get_u32(in);
    ImageD image(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    for (double &v : image.data()) {
        v = io::get_f32(in);
    }
    return image;
}

} // namespace belief
