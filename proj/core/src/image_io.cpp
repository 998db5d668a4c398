#include "casc/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>

namespace casc {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const std::string& path, Index width, Index height, int color_type,
               const std::uint8_t* data, std::size_t row_bytes) {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp";
    FilePtr fp(std::fopen(tmp.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot write: " + tmp);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (Index y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(data + static_cast<std::size_t>(y) * row_bytes));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    fp.reset();
    std::filesystem::rename(tmp, target);
}

struct Decoded {
    Index width = 0;
    Index height = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;
};

Decoded read_png(const std::string& path, bool want_rgb) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png read failed: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_packing(png);
    png_set_expand(png);
    if (want_rgb) {
        png_set_gray_to_rgb(png);
        png_set_strip_alpha(png);
    } else {
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
        png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);

    Decoded out;
    out.width = png_get_image_width(png, info);
    out.height = png_get_image_height(png, info);
    out.channels = static_cast<int>(png_get_channels(png, info));
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    out.data.resize(row_bytes * static_cast<std::size_t>(out.height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
    for (Index y = 0; y < out.height; ++y)
        rows[static_cast<std::size_t>(y)] = out.data.data() + static_cast<std::size_t>(y) * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

} // namespace

void write_rgb_png(const std::string& path, const ImageRgb8& image) {
    write_png(path, image.width, image.height, PNG_COLOR_TYPE_RGB, image.pixels.data(),
              static_cast<std::size_t>(image.width) * 3);
}

ImageRgb8 read_rgb_png(const std::string& path) {
    Decoded d = read_png(path, true);
    if (d.channels != 3) throw std::runtime_error("expected RGB image: " + path);
    ImageRgb8 img;
    img.width = d.width;
    img.height = d.height;
    img.pixels = std::move(d.data);
    return img;
}

void write_mask_png(const std::string& path, const BinaryMask& mask) {
    std::vector<std::uint8_t> gray(static_cast<std::size_t>(mask.size()));
    for (Index i = 0; i < mask.size(); ++i) gray[static_cast<std::size_t>(i)] = mask[i] ? 255 : 0;
    write_png(path, mask.width(), mask.height(), PNG_COLOR_TYPE_GRAY, gray.data(),
              static_cast<std::size_t>(mask.width()));
}

BinaryMask read_mask_png(const std::string& path) {
    Decoded d = read_png(path, false);
    BinaryMask mask(d.width, d.height);
    for (Index i = 0; i < mask.size(); ++i)
        mask[i] = d.data[static_cast<std::size_t>(i)] >= 128 ? 1 : 0;
    return mask;
}

bool read_png_size(const std::string& path, Index& width, Index& height) {
    try {
        Decoded d = read_png(path, true);
        width = d.width;
        height = d.height;
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

} // namespace casc
