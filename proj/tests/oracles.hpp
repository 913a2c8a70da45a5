// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

// Reference implementations written with plain loops and no library ops.
// They share only data layouts with the code under test.

#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace oracle {

using Mat = std::vector<double>;  // row-major

/// Cells of the reorganized (R*h) x (C*w) map that global cell (i, j) owns,
/// found by scanning every cell and mapping it back to global coordinates.
inline std::vector<std::pair<std::size_t, std::size_t>> brute_group(std::size_t i, std::size_t j, std::size_t R,
                                                                    std::size_t C, std::size_t h, std::size_t w) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t a = 1; a <= R * h; ++a)
        for (std::size_t b = 1; b <= C * w; ++b)
            if ((a - 1) / R + 1 == i && (b - 1) / C + 1 == j) out.emplace_back(a, b);
    return out;
}

/// Group cross-attention computed one query at a time.
///
/// global: [h*w, d]; tiles: R*C row-major tiles of [h*w, d];
/// wq/wk/wv: per-layer d x d matrices. Queries read from the running output,
/// keys/values from the tile cells of the query's group.
inline Mat group_compress(const Mat& global, const std::vector<Mat>& tiles, std::size_t R, std::size_t C,
                          std::size_t h, std::size_t w, std::size_t d, std::size_t heads,
                          const std::vector<Mat>& wq, const std::vector<Mat>& wk, const std::vector<Mat>& wv) {
    auto tile_cell = [&](std::size_t a, std::size_t b) -> const double* {
        // a, b are 0-based reorganized coordinates.
        const std::size_t x = a / h, i = a % h, y = b / w, j = b % w;
        return tiles[x * C + y].data() + (i * w + j) * d;
    };
    auto project = [&](const double* v, const Mat& W) {
        std::vector<double> out(d, 0.0);
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c) out[c] += v[r] * W[r * d + c];
        return out;
    };
    Mat x = global;
    const std::size_t dh = d / heads;
    for (std::size_t l = 0; l < wq.size(); ++l) {
        Mat next = x;
        for (std::size_t gi = 0; gi < h; ++gi) {
            for (std::size_t gj = 0; gj < w; ++gj) {
                const double* xin = x.data() + (gi * w + gj) * d;
                auto q = project(xin, wq[l]);
                std::vector<std::vector<double>> ks, vs;
                for (std::size_t a = gi * R; a < (gi + 1) * R; ++a)
                    for (std::size_t b = gj * C; b < (gj + 1) * C; ++b) {
                        ks.push_back(project(tile_cell(a, b), wk[l]));
                        vs.push_back(project(tile_cell(a, b), wv[l]));
                    }
                for (std::size_t hh = 0; hh < heads; ++hh) {
                    std::vector<double> s(ks.size());
                    double mx = -1e300;
                    for (std::size_t n = 0; n < ks.size(); ++n) {
                        double dot = 0.0;
                        for (std::size_t e = hh * dh; e < (hh + 1) * dh; ++e) dot += q[e] * ks[n][e];
                        s[n] = dot / std::sqrt(double(dh));
                        mx = std::max(mx, s[n]);
                    }
                    double z = 0.0;
                    for (auto& v : s) z += (v = std::exp(v - mx));
                    for (std::size_t e = hh * dh; e < (hh + 1) * dh; ++e) {
                        double acc = 0.0;
                        for (std::size_t n = 0; n < ks.size(); ++n) acc += s[n] / z * vs[n][e];
                        next[(gi * w + gj) * d + e] = xin[e] + acc;
                    }
                }
            }
        }
        x = std::move(next);
    }
    return x;
}

}  // namespace oracle
