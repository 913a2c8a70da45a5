// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "doccomp/encoder.hpp"
#include "doccomp/errors.hpp"
#include "doccomp/ops.hpp"
#include "doccomp/params.hpp"

namespace doccomp {

/// Tile maps stitched into one (R*h) x (C*w) map, following their position
/// on the high-resolution canvas.
template <typename T>
struct ReorganizedMap {
    std::size_t rows = 1;  // R
    std::size_t cols = 1;  // C
    std::size_t h = 0;     // per-tile map height
    std::size_t w = 0;     // per-tile map width
    std::size_t d = 0;
    Tensor<T> values;      // [rows*h, cols*w, d]

    std::size_t height() const { return rows * h; }
    std::size_t width() const { return cols * w; }
    std::size_t tokens() const { return height() * width(); }
};

/// Cell (x*h + i, y*w + j) of the result is cell (i, j) of tile (x, y).
/// Tiles are given row-major; every one must have the same shape.
template <typename T>
ReorganizedMap<T> reorganize(const std::vector<FeatureMap<T>>& tiles, std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) throw ConfigError("doc-compressor", "empty crop grid");
    if (tiles.size() != rows * cols) {
        throw ConsistencyError("doc-compressor", "grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                                                     " needs " + std::to_string(rows * cols) + " tiles, got " +
                                                     std::to_string(tiles.size()));
    }
    const std::size_t h = tiles[0].h, w = tiles[0].w, d = tiles[0].d;
    std::vector<Tensor<T>> flat;
    for (std::size_t t = 0; t < tiles.size(); ++t) {
        const auto& m = tiles[t];
        if (m.h != h || m.w != w || m.d != d || m.values.size() != h * w * d) {
            throw ConsistencyError("doc-compressor", "tile " + std::to_string(t) + " is missing cells or differs in shape");
        }
        flat.push_back(reshape(m.values, {h * w, d}));
    }
    auto all = concat_rows(flat);
    std::vector<std::size_t> idx(rows * h * cols * w);
    for (std::size_t x = 0; x < rows; ++x)
        for (std::size_t y = 0; y < cols; ++y)
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j)
                    idx[(x * h + i) * (cols * w) + y * w + j] = (x * cols + y) * h * w + i * w + j;
    ReorganizedMap<T> out{rows, cols, h, w, d, {}};
    out.values = reshape(gather_rows(all, idx), {rows * h, cols * w, d});
    return out;
}

/// Inverse of reorganize: cuts the map back into row-major tiles.
template <typename T>
std::vector<FeatureMap<T>> split_tiles(const ReorganizedMap<T>& m) {
    auto flat = reshape(m.values, {m.tokens(), m.d});
    std::vector<FeatureMap<T>> out;
    for (std::size_t x = 0; x < m.rows; ++x) {
        for (std::size_t y = 0; y < m.cols; ++y) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < m.h; ++i)
                for (std::size_t j = 0; j < m.w; ++j) idx.push_back((x * m.h + i) * m.width() + y * m.w + j);
            out.push_back({m.h, m.w, m.d, reshape(gather_rows(flat, idx), {m.h, m.w, m.d}),
                           Provenance::sub(int(x), int(y))});
        }
    }
    return out;
}

/// Reorganized cells that a global cell attends to. Everything is 1-based:
/// global cell (i, j) of an h x w map owns rows (i-1)R+1..iR and columns
/// (j-1)C+1..jC of the reorganized map.
inline std::vector<std::pair<std::size_t, std::size_t>> group_of(std::size_t i, std::size_t j, std::size_t rows,
                                                                 std::size_t cols, std::size_t h, std::size_t w) {
    if (rows == 0 || cols == 0) throw ConfigError("doc-compressor", "empty crop grid");
    if (i < 1 || i > h || j < 1 || j > w) {
        throw DimensionError("doc-compressor", "global cell (" + std::to_string(i) + "," + std::to_string(j) +
                                                   ") outside the " + std::to_string(h) + "x" + std::to_string(w) +
                                                   " map");
    }
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(rows * cols);
    for (std::size_t a = (i - 1) * rows + 1; a <= i * rows; ++a)
        for (std::size_t b = (j - 1) * cols + 1; b <= j * cols; ++b) out.emplace_back(a, b);
    return out;
}

/// Key sets over the flattened reorganized map, one per global cell (row-major).
inline KeySets group_key_sets(std::size_t h, std::size_t w, std::size_t rows, std::size_t cols) {
    KeySets s;
    std::vector<std::size_t> ks;
    for (std::size_t i = 1; i <= h; ++i) {
        for (std::size_t j = 1; j <= w; ++j) {
            ks.clear();
            for (auto [a, b] : group_of(i, j, rows, cols, h, w)) ks.push_back((a - 1) * (cols * w) + (b - 1));
            s.push(ks);
        }
    }
    return s;
}

enum class CompressorKind { GroupAtt, CompleteAtt, GroupMean, Resampler, AdaptiveMean };
enum class Placement { AfterReducer, AfterVit };

inline std::string to_string(CompressorKind k) {
    switch (k) {
        case CompressorKind::GroupAtt: return "group_att";
        case CompressorKind::CompleteAtt: return "complete_att";
        case CompressorKind::GroupMean: return "group_mean";
        case CompressorKind::Resampler: return "resampler";
        case CompressorKind::AdaptiveMean: return "adaptive_mean";
    }
    return "?";
}

inline std::string to_string(Placement p) { return p == Placement::AfterReducer ? "after_reducer" : "after_vit"; }

inline CompressorKind parse_compressor_kind(const std::string& s) {
    for (auto k : {CompressorKind::GroupAtt, CompressorKind::CompleteAtt, CompressorKind::GroupMean,
                   CompressorKind::Resampler, CompressorKind::AdaptiveMean})
        if (to_string(k) == s) return k;
    throw ConfigError("doc-compressor", "variant: unknown value '" + s + "'");
}

inline Placement parse_placement(const std::string& s) {
    if (s == "after_reducer") return Placement::AfterReducer;
    if (s == "after_vit") return Placement::AfterVit;
    throw ConfigError("doc-compressor", "placement: unknown value '" + s + "'");
}

struct CompressorSpec {
    CompressorKind kind = CompressorKind::GroupAtt;
    Placement placement = Placement::AfterReducer;
    int layers = 2;
    int heads = 1;
    int query_count = 0;  // resampler only; 0 means one query per global cell

    void validate() const {
        if (layers < 1) throw ConfigError("doc-compressor", "layers must be >= 1");
        if (heads < 1) throw ConfigError("doc-compressor", "heads must be >= 1");
        if (query_count < 0) throw ConfigError("doc-compressor", "query_count must be >= 0");
        if (kind == CompressorKind::Resampler && placement == Placement::AfterVit) {
            throw ConfigError("doc-compressor", "placement: the resampler has no spatial layout to reduce after_vit");
        }
    }
};

/// Multiply-add counts (2 FLOPs each) for one compression pass.
struct CompressorFlops {
    double projection = 0.0;
    double attention = 0.0;
    double total() const { return projection + attention; }
};

inline CompressorFlops compressor_flops(const CompressorSpec& spec, std::size_t h, std::size_t w, std::size_t rows,
                                        std::size_t cols, std::size_t d) {
    const double g = double(h) * w;
    const double rc = double(rows) * cols;
    const double nk = rc * g;
    const double L = spec.layers;
    const double dd = double(d) * d;
    CompressorFlops f;
    switch (spec.kind) {
        case CompressorKind::GroupAtt:
            f.projection = L * 2.0 * dd * (g + 2.0 * nk);
            f.attention = L * 4.0 * d * g * rc;
            break;
        case CompressorKind::CompleteAtt:
            f.projection = L * 2.0 * dd * (g + 2.0 * nk);
            f.attention = L * 4.0 * d * g * nk;
            break;
        case CompressorKind::Resampler: {
            const double q = spec.query_count > 0 ? spec.query_count : g;
            f.projection = L * 2.0 * dd * (q + 2.0 * (nk + g));
            f.attention = L * 4.0 * d * q * (nk + g);
            break;
        }
        case CompressorKind::GroupMean:
        case CompressorKind::AdaptiveMean:
            f.attention = double(d) * (nk + g);
            break;
    }
    return f;
}

/// Compresses a global map plus its tiles into h*w tokens (or query_count
/// tokens for the resampler).
///
/// Attention variants stack `layers` cross-attention layers without norm or
/// feed-forward. Layer l takes queries from the previous output (the global
/// map for l = 0), projects keys and values from the reorganized map with its
/// own Wq/Wk/Wv, and adds the incoming queries back as a residual. Heads are
/// concatenated without an output projection.
template <typename T>
class Compressor {
public:
    Compressor(const CompressorSpec& spec, std::size_t d, std::size_t h, std::size_t w, ParameterStore<T>& store,
               Rng& rng)
        : spec_(spec), d_(d), h_(h), w_(w) {
        spec_.validate();
        if (d % std::size_t(spec_.heads) != 0) {
            throw ConfigError("doc-compressor", "heads: " + std::to_string(spec_.heads) + " does not divide dim " +
                                                    std::to_string(d));
        }
        if (has_attention()) {
            for (int l = 0; l < spec_.layers; ++l) {
                const std::string p = "compressor.layer" + std::to_string(l);
                wq_.push_back(store.add(p + ".wq", "compressor", {d, d}, rng));
                wk_.push_back(store.add(p + ".wk", "compressor", {d, d}, rng));
                wv_.push_back(store.add(p + ".wv", "compressor", {d, d}, rng));
            }
        }
        if (spec_.kind == CompressorKind::Resampler) {
            queries_ = store.add("compressor.queries", "compressor", {output_tokens(), d}, InitSpec::uniform(-1.0, 1.0),
                                 rng);
        }
    }

    const CompressorSpec& spec() const { return spec_; }
    std::size_t output_tokens() const {
        if (spec_.kind == CompressorKind::Resampler && spec_.query_count > 0) return std::size_t(spec_.query_count);
        return h_ * w_;
    }
    bool has_attention() const {
        return spec_.kind == CompressorKind::GroupAtt || spec_.kind == CompressorKind::CompleteAtt ||
               spec_.kind == CompressorKind::Resampler;
    }

    /// Returns [output_tokens, d]. The crop grid is read from `reorg`.
    Tensor<T> compress(const FeatureMap<T>& global, const ReorganizedMap<T>& reorg,
                       std::vector<std::vector<T>>* weights_out = nullptr) const {
        check(global, reorg);
        const std::size_t g = h_ * w_;
        auto gflat = reshape(global.values, {g, d_});
        auto kv = reshape(reorg.values, {reorg.tokens(), d_});
        switch (spec_.kind) {
            case CompressorKind::GroupMean:
                return add(gflat, segment_mean(kv, key_sets(reorg.rows, reorg.cols)));
            case CompressorKind::AdaptiveMean:
                return reshape(adaptive_mean_pool(reorg.values, h_, w_), {g, d_});
            case CompressorKind::Resampler:
                return stack(queries_, concat_rows(std::vector<Tensor<T>>{gflat, kv}), key_sets(reorg.rows, reorg.cols),
                             weights_out);
            default:
                return stack(gflat, kv, key_sets(reorg.rows, reorg.cols), weights_out);
        }
    }

private:
    void check(const FeatureMap<T>& global, const ReorganizedMap<T>& reorg) const {
        if (global.h != h_ || global.w != w_ || global.d != d_) {
            throw DimensionError("doc-compressor", "global map " + std::to_string(global.h) + "x" +
                                                       std::to_string(global.w) + "x" + std::to_string(global.d) +
                                                       " does not match the configured geometry");
        }
        if (reorg.h != h_ || reorg.w != w_ || reorg.d != d_ || reorg.values.size() != reorg.tokens() * d_) {
            throw ConsistencyError("doc-compressor", "reorganized map does not match the global map");
        }
    }

    std::shared_ptr<const KeySets> key_sets(std::size_t rows, std::size_t cols) const {
        auto& slot = sets_[{rows, cols}];
        if (!slot) {
            const std::size_t g = h_ * w_, nk = rows * cols * g;
            switch (spec_.kind) {
                case CompressorKind::CompleteAtt: slot = std::make_shared<KeySets>(KeySets::full(g, nk)); break;
                case CompressorKind::Resampler:
                    slot = std::make_shared<KeySets>(KeySets::full(output_tokens(), nk + g));
                    break;
                default: slot = std::make_shared<KeySets>(group_key_sets(h_, w_, rows, cols)); break;
            }
        }
        return slot;
    }

    Tensor<T> stack(Tensor<T> x, const Tensor<T>& kv, const std::shared_ptr<const KeySets>& sets,
                    std::vector<std::vector<T>>* weights_out) const {
        if (weights_out) weights_out->assign(wq_.size(), {});
        for (std::size_t l = 0; l < wq_.size(); ++l) {
            auto att = attention(matmul(x, wq_[l]), matmul(kv, wk_[l]), matmul(kv, wv_[l]), sets,
                                 std::size_t(spec_.heads), weights_out ? &(*weights_out)[l] : nullptr);
            x = add(x, att);
        }
        return x;
    }

    CompressorSpec spec_;
    std::size_t d_, h_, w_;
    std::vector<Tensor<T>> wq_, wk_, wv_;
    Tensor<T> queries_;
    mutable std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const KeySets>> sets_;
};

}  // namespace doccomp
