#pragma once

#include <array>
#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "sfam/activation_map.hpp"

namespace sfam {

/// 8-bit interleaved RGB image.
struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  ///< width * height * 3

    RgbImage() = default;
    RgbImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * 3, fill) {}

    std::uint8_t *at(std::size_t i, std::size_t j) { return &pixels[(i * width + j) * 3]; }
    const std::uint8_t *at(std::size_t i, std::size_t j) const { return &pixels[(i * width + j) * 3]; }

    friend bool operator==(const RgbImage &, const RgbImage &) = default;
};

using Rgb = std::array<std::uint8_t, 3>;

/// 256-entry jet colormap: blue -> cyan -> yellow -> red, linear between the
/// stops 0, 0.35, 0.66 and 1.
inline const std::array<Rgb, 256> &jet_colormap() {
    static const std::array<Rgb, 256> table = [] {
        struct Stop {
            double t, r, g, b;
        };
        constexpr Stop stops[] = {{0.0, 0, 0, 255}, {0.35, 0, 255, 255}, {0.66, 255, 255, 0}, {1.0, 255, 0, 0}};
        std::array<Rgb, 256> t{};
        for (std::size_t k = 0; k < 256; ++k) {
            const double x = static_cast<double>(k) / 255.0;
            std::size_t s = 0;
            while (s + 2 < std::size(stops) && x > stops[s + 1].t) ++s;
            const Stop &a = stops[s], &b = stops[s + 1];
            const double f = (x - a.t) / (b.t - a.t);
            auto lerp = [f](double u, double v) { return static_cast<std::uint8_t>(std::lround(u + f * (v - u))); };
            t[k] = {lerp(a.r, b.r), lerp(a.g, b.g), lerp(a.b, b.b)};
        }
        return t;
    }();
    return table;
}

inline Rgb colormap_lookup(float v) {
    const double clamped = std::clamp(static_cast<double>(v), 0.0, 1.0);
    return jet_colormap()[static_cast<std::size_t>(std::lround(clamped * 255.0))];
}

/// Per-pixel alpha * heat + (1 - alpha) * image, heat taken from the colormap.
inline RgbImage blend_heatmap(const RgbImage &image, const ActivationMap &map, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("overlay alpha must lie in [0, 1]");
    if (image.width != map.width() || image.height != map.height())
        throw Error("overlay: image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                    " but map is " + std::to_string(map.width()) + "x" + std::to_string(map.height()));
    RgbImage out = image;
    for (std::size_t i = 0; i < image.height; ++i)
        for (std::size_t j = 0; j < image.width; ++j) {
            const Rgb heat = colormap_lookup(map.at(i, j));
            std::uint8_t *px = out.at(i, j);
            for (int c = 0; c < 3; ++c)
                px[c] = static_cast<std::uint8_t>(std::lround(alpha * heat[c] + (1.0 - alpha) * px[c]));
        }
    return out;
}

/// Images placed left to right; heights must agree.
inline RgbImage hconcat(const std::vector<RgbImage> &tiles) {
    if (tiles.empty()) throw Error("hconcat: no tiles");
    std::size_t w = 0;
    for (const auto &t : tiles) {
        if (t.height != tiles.front().height) throw Error("hconcat: tile heights differ");
        w += t.width;
    }
    RgbImage out(w, tiles.front().height);
    std::size_t x0 = 0;
    for (const auto &t : tiles) {
        for (std::size_t i = 0; i < t.height; ++i) std::memcpy(out.at(i, x0), t.at(i, 0), t.width * 3);
        x0 += t.width;
    }
    return out;
}

namespace detail {

inline RgbImage read_png(const std::filesystem::path &path) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw Error(path.string() + ": cannot read PNG: " + img.message);
    img.format = PNG_FORMAT_RGB;
    RgbImage out(img.width, img.height);
    if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&img);
        throw Error(path.string() + ": cannot decode PNG: " + img.message);
    }
    return out;
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

inline RgbImage read_jpeg(const std::filesystem::path &path) {
    std::unique_ptr<FILE, int (*)(FILE *)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!file) throw Error(path.string() + ": cannot open image");

    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    // The default handler calls exit(); jump back here instead.
    err.base.error_exit = [](j_common_ptr c) {
        auto *e = reinterpret_cast<JpegErrorManager *>(c->err);
        (*c->err->format_message)(c, e->message);
        std::longjmp(e->jump, 1);
    };
    RgbImage out;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw Error(path.string() + ": cannot decode JPEG: " + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, file.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    out.width = cinfo.output_width;
    out.height = cinfo.output_height;
    out.pixels.resize(out.width * out.height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out.at(cinfo.output_scanline, 0);
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return out;
}

}  // namespace detail

/// Reads a PNG or baseline JPEG, detected from the file signature.
inline RgbImage read_image(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(path.string() + ": cannot open image");
    unsigned char sig[8] = {};
    in.read(reinterpret_cast<char *>(sig), sizeof sig);
    if (in.gcount() >= 8 && png_sig_cmp(sig, 0, 8) == 0) return detail::read_png(path);
    if (in.gcount() >= 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) return detail::read_jpeg(path);
    throw Error(path.string() + ": unrecognized image format (expected PNG or JPEG)");
}

inline void write_png(const std::filesystem::path &path, const RgbImage &image) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr))
        throw Error(path.string() + ": cannot write PNG: " + img.message);
}

/// Blends the colormapped `map` over the image at `image_path` and writes a PNG.
inline void render_overlay(const std::filesystem::path &image_path, const ActivationMap &map,
                           const std::filesystem::path &out_path, double alpha = 0.5) {
    write_png(out_path, blend_heatmap(read_image(image_path), map, alpha));
}

}  // namespace sfam
