#pragma once
// 8-bit PNG input/output. Images are RGB, masks are single-channel gray with
// foreground stored as 255.

#include <cstdint>
#include <string>
#include <vector>

#include "casc/grid.hpp"

namespace casc {

// Interleaved 8-bit RGB image, row-major.
struct ImageRgb8 {
    Index width = 0;
    Index height = 0;
    std::vector<std::uint8_t> pixels; // 3 * width * height

    std::uint8_t at(Index x, Index y, int ch) const {
        return pixels[static_cast<std::size_t>(3 * (y * width + x) + ch)];
    }
    void set(Index x, Index y, int ch, std::uint8_t v) {
        pixels[static_cast<std::size_t>(3 * (y * width + x) + ch)] = v;
    }
};

void write_rgb_png(const std::string& path, const ImageRgb8& image);
ImageRgb8 read_rgb_png(const std::string& path);

void write_mask_png(const std::string& path, const BinaryMask& mask);
BinaryMask read_mask_png(const std::string& path);

// Reads just the IHDR dimensions; used by manifest validation.
bool read_png_size(const std::string& path, Index& width, Index& height);

} // namespace casc
