// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "doccomp/errors.hpp"
#include "doccomp/image.hpp"

namespace doccomp {

struct PixelRect {
    int top = 0;
    int left = 0;
    int height = 0;
    int width = 0;
    bool operator==(const PixelRect&) const = default;
};

/// One grid cell: 0-based (row, col) and its rectangle on the resized canvas.
struct SubRect {
    int row = 0;
    int col = 0;
    PixelRect rect;
};

/// Result of shape-adaptive cropping for one image.
struct CropPlan {
    int rows = 1;
    int cols = 1;
    int base = 0;
    int source_height = 0;
    int source_width = 0;
    std::vector<SubRect> sub_rects;  // row-major, rows*cols entries

    int crops() const { return rows * cols; }
    int canvas_height() const { return rows * base; }
    int canvas_width() const { return cols * base; }
};

/// Score of grid (r, c) for an image, higher is better.
///
/// Shape term: min(a, g) / max(a, g) with a = width/height of the image and
/// g = (c*base)/(r*base). Resolution term: min(A, G) / max(A, G) where G is
/// the canvas area r*c*base^2 and A is the image area clamped to
/// [base^2, max_crops*base^2], so every image too large for the largest
/// canvas (or too small for one tile) is scored as that bound.
inline double crop_score(int img_h, int img_w, int r, int c, int base, int max_crops) {
    const double ar_img = static_cast<double>(img_w) / img_h;
    const double ar_grid = static_cast<double>(c) / r;
    const double shape = std::min(ar_img, ar_grid) / std::max(ar_img, ar_grid);
    const double tile = static_cast<double>(base) * base;
    const double area = std::clamp(static_cast<double>(img_w) * img_h, tile, tile * max_crops);
    const double canvas = tile * r * c;
    const double resolution = std::min(area, canvas) / std::max(area, canvas);
    return shape + resolution;
}

/// Enumerates all grids with 1 <= r*c <= max_crops and keeps the best score;
/// ties go to fewer crops, then fewer rows.
inline CropPlan plan_crops(const RawImage& img, int max_crops, int base) {
    if (max_crops < 1) throw ConfigError("shape-adaptive-cropper", "max_crops must be >= 1, got " + std::to_string(max_crops));
    if (base < 1) throw ConfigError("shape-adaptive-cropper", "base must be >= 1, got " + std::to_string(base));
    if (img.height < 1 || img.width < 1) throw DimensionError("shape-adaptive-cropper", "empty image");
    int best_r = 1, best_c = 1;
    double best = -1.0;
    for (int r = 1; r <= max_crops; ++r) {
        for (int c = 1; r * c <= max_crops; ++c) {
            const double s = crop_score(img.height, img.width, r, c, base, max_crops);
            const bool better = s > best || (s == best && (r * c < best_r * best_c ||
                                                          (r * c == best_r * best_c && r < best_r)));
            if (better) {
                best = s;
                best_r = r;
                best_c = c;
            }
        }
    }
    CropPlan plan;
    plan.rows = best_r;
    plan.cols = best_c;
    plan.base = base;
    plan.source_height = img.height;
    plan.source_width = img.width;
    for (int r = 0; r < best_r; ++r)
        for (int c = 0; c < best_c; ++c) plan.sub_rects.push_back({r, c, {r * base, c * base, base, base}});
    return plan;
}

/// Builds a plan with a caller-chosen grid (used by ablations and tests).
inline CropPlan fixed_plan(const RawImage& img, int rows, int cols, int base) {
    if (rows < 1 || cols < 1 || base < 1) throw ConfigError("shape-adaptive-cropper", "invalid fixed grid");
    CropPlan plan;
    plan.rows = rows;
    plan.cols = cols;
    plan.base = base;
    plan.source_height = img.height;
    plan.source_width = img.width;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) plan.sub_rects.push_back({r, c, {r * base, c * base, base, base}});
    return plan;
}

struct SlicedImage {
    RawImage global;
    std::vector<RawImage> subs;  // row-major over the plan grid
    int rows = 1;
    int cols = 1;

    const RawImage& sub(int r, int c) const { return subs[std::size_t(r) * cols + c]; }
};

/// Resizes the image to base x base (global view) and to the
/// (rows*base) x (cols*base) canvas, which is then cut into tiles.
inline SlicedImage slice_image(const RawImage& img, const CropPlan& plan) {
    if (plan.source_height != img.height || plan.source_width != img.width) {
        throw ConsistencyError("shape-adaptive-cropper",
                               "plan was made for " + std::to_string(plan.source_height) + "x" +
                                   std::to_string(plan.source_width) + " but image is " + std::to_string(img.height) +
                                   "x" + std::to_string(img.width));
    }
    if (plan.sub_rects.size() != static_cast<std::size_t>(plan.crops())) {
        throw ConsistencyError("shape-adaptive-cropper", "plan has " + std::to_string(plan.sub_rects.size()) +
                                                             " rectangles for a " + std::to_string(plan.rows) + "x" +
                                                             std::to_string(plan.cols) + " grid");
    }
    SlicedImage out;
    out.rows = plan.rows;
    out.cols = plan.cols;
    out.global = resize_bilinear(img, plan.base, plan.base);
    const RawImage canvas = resize_bilinear(img, plan.canvas_height(), plan.canvas_width());
    for (const auto& s : plan.sub_rects)
        out.subs.push_back(crop(canvas, s.rect.top, s.rect.left, s.rect.height, s.rect.width));
    return out;
}

}  // namespace doccomp
