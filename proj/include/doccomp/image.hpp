// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doccomp/errors.hpp"

namespace doccomp {

/// Row-major page or frame with interleaved channels, values in [0, 1].
struct RawImage {
    int height = 0;
    int width = 0;
    int channels = 1;  // 1 or 3
    std::vector<float> pixels;

    RawImage() = default;
    RawImage(int h, int w, int c, float fill = 0.0f) : height(h), width(w), channels(c), pixels(std::size_t(h) * w * c, fill) {
        if (h < 1 || w < 1 || (c != 1 && c != 3)) {
            throw DimensionError("image", "invalid image geometry " + std::to_string(h) + "x" + std::to_string(w) +
                                              "x" + std::to_string(c));
        }
    }

    float& at(int y, int x, int c = 0) { return pixels[(std::size_t(y) * width + x) * channels + c]; }
    float at(int y, int x, int c = 0) const { return pixels[(std::size_t(y) * width + x) * channels + c]; }

    bool operator==(const RawImage&) const = default;
};

/// Grayscale images are replicated to three channels; RGB passes through.
inline RawImage to_rgb(const RawImage& img) {
    if (img.channels == 3) return img;
    RawImage out(img.height, img.width, 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        for (int c = 0; c < 3; ++c) out.pixels[i * 3 + c] = img.pixels[i];
    return out;
}

/// Bilinear resize with corner-aligned sampling: output pixel (i, j) samples
/// source coordinate (i*(H-1)/(h-1), j*(W-1)/(w-1)); a 1-pixel output axis
/// samples coordinate 0. Same-size resizes are exact copies.
inline RawImage resize_bilinear(const RawImage& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw DimensionError("image", "resize to empty extent");
    if (out_h == img.height && out_w == img.width) return img;
    RawImage out(out_h, out_w, img.channels);
    auto coord = [](int i, int in, int outn) {
        if (outn == 1) return 0.0;
        return static_cast<double>(i) * (in - 1) / (outn - 1);
    };
    for (int y = 0; y < out_h; ++y) {
        const double sy = coord(y, img.height, out_h);
        const int y0 = std::min(static_cast<int>(sy), img.height - 1);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double fy = sy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double sx = coord(x, img.width, out_w);
            const int x0 = std::min(static_cast<int>(sx), img.width - 1);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double fx = sx - x0;
            for (int c = 0; c < img.channels; ++c) {
                const double top = img.at(y0, x0, c) * (1.0 - fx) + img.at(y0, x1, c) * fx;
                const double bot = img.at(y1, x0, c) * (1.0 - fx) + img.at(y1, x1, c) * fx;
                out.at(y, x, c) = static_cast<float>(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    return out;
}

/// Copies the rectangle [top, top+h) x [left, left+w).
inline RawImage crop(const RawImage& img, int top, int left, int h, int w) {
    if (top < 0 || left < 0 || top + h > img.height || left + w > img.width) {
        throw DimensionError("image", "crop rectangle outside the image");
    }
    RawImage out(h, w, img.channels);
    for (int y = 0; y < h; ++y)
        std::copy_n(img.pixels.begin() + (std::size_t(top + y) * img.width + left) * img.channels,
                    std::size_t(w) * img.channels, out.pixels.begin() + std::size_t(y) * w * img.channels);
    return out;
}

namespace detail {

inline std::uint8_t to_byte(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline std::string next_pnm_token(std::istream& is) {
    std::string tok;
    char ch;
    while (is.get(ch)) {
        if (ch == '#') {
            std::string skip;
            std::getline(is, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!tok.empty()) break;
            continue;
        }
        tok += ch;
    }
    return tok;
}

}  // namespace detail

/// Binary PPM (P6, 3 channels) or PGM (P5, 1 channel), maxval <= 255.
inline void write_pnm(const std::filesystem::path& path, const RawImage& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("image", "cannot write " + path.string());
    os << (img.channels == 3 ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
    std::vector<char> bytes(img.pixels.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<char>(detail::to_byte(img.pixels[i]));
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline RawImage read_pnm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("image", "cannot read " + path.string());
    const std::string magic = detail::next_pnm_token(is);
    if (magic != "P6" && magic != "P5") throw IoError("image", path.string() + ": unsupported PNM type " + magic);
    const int w = std::stoi(detail::next_pnm_token(is));
    const int h = std::stoi(detail::next_pnm_token(is));
    const int maxval = std::stoi(detail::next_pnm_token(is));
    if (maxval <= 0 || maxval > 255) throw IoError("image", path.string() + ": only 8-bit PNM is supported");
    RawImage img(h, w, magic == "P6" ? 3 : 1);
    std::vector<unsigned char> bytes(img.pixels.size());
    if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
        throw IoError("image", path.string() + ": truncated pixel data");
    }
    for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / static_cast<float>(maxval);
    return img;
}

inline RawImage read_png(const std::filesystem::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
        throw IoError("image", path.string() + ": " + png.message);
    }
    const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
    png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&png);
        throw IoError("image", path.string() + ": " + png.message);
    }
    RawImage img(static_cast<int>(png.height), static_cast<int>(png.width), gray ? 1 : 3);
    for (std::size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i] / 255.0f;
    return img;
}

inline void write_png(const std::filesystem::path& path, const RawImage& img) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<unsigned char> buf(img.pixels.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = detail::to_byte(img.pixels[i]);
    if (!png_image_write_to_file(&png, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
        throw IoError("image", path.string() + ": " + png.message);
    }
}

/// Dispatches on extension: .png, else PNM.
inline RawImage read_image(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") return read_png(path);
    return read_pnm(path);
}

}  // namespace doccomp
