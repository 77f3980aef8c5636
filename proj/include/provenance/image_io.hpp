#pragma once

// PNG/JPEG decoding and PNG encoding. Requires linking libpng and libjpeg.

#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "provenance/imaging.hpp"

namespace provenance {

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) throw ImageIoError("cannot open " + path.string());
    return f;
}

inline GrayImage read_png(const std::filesystem::path& path) {
    FilePtr f = open_file(path, "rb");
    // Warnings (e.g. stray ICC profiles) are not actionable for grey decoding.
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, [](png_structp, png_const_charp) {});
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIoError("libpng initialisation failed");
    }
    GrayImage img;
    std::vector<std::uint8_t> rgb;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIoError("corrupt PNG: " + path.string());
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    rgb.resize(static_cast<std::size_t>(w) * h * 3);
    rows.resize(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[y] = rgb.data() + static_cast<std::size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    img = GrayImage(w, h);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        img.data[i] = luma601(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]);
    }
    return img;
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    std::longjmp(err->jump, 1);
}

inline GrayImage read_jpeg(const std::filesystem::path& path) {
    FilePtr f = open_file(path, "rb");
    jpeg_decompress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    std::vector<std::uint8_t> rgb;
    int w = 0, h = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw ImageIoError("corrupt JPEG: " + path.string());
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    w = static_cast<int>(cinfo.output_width);
    h = static_cast<int>(cinfo.output_height);
    rgb.resize(static_cast<std::size_t>(w) * h * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);

    GrayImage img(w, h);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        img.data[i] = luma601(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]);
    }
    return img;
}

}  // namespace detail

/// Decodes a PNG or JPEG file (sniffed by signature) to 8-bit grayscale.
inline GrayImage read_image(const std::filesystem::path& path) {
    unsigned char sig[8] = {};
    {
        detail::FilePtr f = detail::open_file(path, "rb");
        if (std::fread(sig, 1, sizeof sig, f.get()) < 3) throw ImageIoError("truncated image: " + path.string());
    }
    if (png_sig_cmp(sig, 0, 8) == 0) return detail::read_png(path);
    if (sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) return detail::read_jpeg(path);
    throw ImageIoError("unsupported image format: " + path.string());
}

/// Writes an 8-bit grayscale PNG. Output bytes depend only on the pixels.
inline void write_png(const std::filesystem::path& path, const GrayImage& img) {
    detail::FilePtr f = detail::open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw ImageIoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ImageIoError("failed writing PNG: " + path.string());
    }
    png_init_io(png, f.get());
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(img.data.data() + static_cast<std::size_t>(y) * img.width));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace provenance
