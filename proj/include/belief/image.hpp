#pragma once

#include "belief/common.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace belief {

/// Dense row-major H x W x C image.
template <class T>
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels, T fill = T{})
        : mHeight(height), mWidth(width), mChannels(channels),
          mData(static_cast<std::size_t>(height) * width * channels, fill) {}

    int height() const noexcept { return mHeight; }
    int width() const noexcept { return mWidth; }
    int channels() const noexcept { return mChannels; }
    bool empty() const noexcept { return mData.empty(); }
    std::size_t size() const noexcept { return mData.size(); }

    bool same_shape(const Image &other) const noexcept {
        return mHeight == other.mHeight && mWidth == other.mWidth && mChannels == other.mChannels;
    }
    bool same_extent(int height, int width) const noexcept {
        return mHeight == height && mWidth == width;
    }

    T &operator()(int y, int x, int c = 0) { return mData[index(y, x, c)]; }
    const T &operator()(int y, int x, int c = 0) const { return mData[index(y, x, c)]; }

    std::span<T> pixel(int y, int x) { return {mData.data() + index(y, x, 0), static_cast<std::size_t>(mChannels)}; }
    std::span<const T> pixel(int y, int x) const {
        return {mData.data() + index(y, x, 0), static_cast<std::size_t>(mChannels)};
    }

    std::vector<T> &data() noexcept { return mData; }
    const std::vector<T> &data() const noexcept { return mData; }

    bool operator==(const Image &) const = default;

private:
    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * mWidth + x) * mChannels + c;
    }

    int mHeight = 0;
    int mWidth = 0;
    int mChannels = 0;
    std::vector<T> mData;
};

using ImageD = Image<double>;
using Mask = Image<std::uint8_t>;

/// 8-bit RGB PNG; values are clamped to [0,1] and rounded.
void write_png(const std::filesystem::path &path, const ImageD &rgb);
ImageD read_png(const std::filesystem::path &path);

/// Flat float32 little-endian with a 16-byte header {H u32, W u32, C u32, reserved u32}.
void write_float_image(const std::filesystem::path &path, const ImageD &image);
ImageD read_float_image(const std::filesystem::path &path);

} // namespace belief
