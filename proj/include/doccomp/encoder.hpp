// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "doccomp/cropper.hpp"
#include "doccomp/image.hpp"
#include "doccomp/ops.hpp"
#include "doccomp/params.hpp"
#include "doccomp/transformer.hpp"

namespace doccomp {

/// Where a feature map came from.
struct Provenance {
    enum class Kind { Global, Sub, Reorganized };
    Kind kind = Kind::Global;
    int row = -1;  // 0-based grid cell for Kind::Sub
    int col = -1;

    static Provenance global() { return {Kind::Global, -1, -1}; }
    static Provenance sub(int r, int c) { return {Kind::Sub, r, c}; }
    static Provenance reorganized() { return {Kind::Reorganized, -1, -1}; }
    bool operator==(const Provenance&) const = default;
};

/// Dense [h, w, d] grid of features.
template <typename T>
struct FeatureMap {
    std::size_t h = 0;
    std::size_t w = 0;
    std::size_t d = 0;
    Tensor<T> values;
    Provenance provenance;
};

struct EncoderConfig {
    int patch_size = 14;
    int depth = 1;
    int d_model = 64;
    int heads = 4;
    int base = 56;
    int mlp_ratio = 4;

    int grid() const { return base / patch_size; }

    void validate() const {
        if (patch_size < 1 || base < 1) throw ConfigError("visual-encoder", "patch_size and base must be positive");
        if (base % patch_size != 0) {
            throw ConfigError("visual-encoder", "base " + std::to_string(base) + " is not divisible by patch_size " +
                                                    std::to_string(patch_size));
        }
        if (depth < 0) throw ConfigError("visual-encoder", "depth must be >= 0");
        if (d_model < 1 || heads < 1 || d_model % heads != 0) {
            throw ConfigError("visual-encoder", "d_model " + std::to_string(d_model) + " is not divisible by heads " +
                                                    std::to_string(heads));
        }
    }
};

/// Shared-weight patch transformer applied to the global image and every tile.
///
/// Pixels are read as ink intensity 1 - p, so a white page is all zeros and
/// only marks carry signal. They are embedded by a stride-patch convolution, given
/// learned absolute position embeddings and passed through `depth` pre-norm
/// blocks with full attention. There is no class token; the output is the
/// patch grid itself. Depth 0 leaves only the patch projection.
template <typename T>
class VisualEncoder {
public:
    VisualEncoder(const EncoderConfig& cfg, ParameterStore<T>& store, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        const std::size_t p = cfg_.patch_size, d = cfg_.d_model, n = std::size_t(cfg_.grid()) * cfg_.grid();
        patch_w_ = store.add("encoder.patch.weight", "encoder", {p, p, 3, d}, rng);
        patch_b_ = store.add("encoder.patch.bias", "encoder", {d}, InitSpec::zeros(), rng);
        pos_ = store.add("encoder.pos", "encoder", {n, d}, InitSpec::zeros(), rng);
        for (int i = 0; i < cfg_.depth; ++i) {
            blocks_.push_back(TransformerBlock<T>::create(store, "encoder.block" + std::to_string(i), "encoder", d,
                                                          d * cfg_.mlp_ratio, cfg_.heads, rng));
        }
        full_ = std::make_shared<KeySets>(KeySets::full(n, n));
    }

    const EncoderConfig& config() const { return cfg_; }

    FeatureMap<T> encode(const RawImage& img, Provenance prov) const {
        if (img.height != cfg_.base || img.width != cfg_.base) {
            throw DimensionError("visual-encoder", "expected a " + std::to_string(cfg_.base) + "x" +
                                                       std::to_string(cfg_.base) + " image, got " +
                                                       std::to_string(img.height) + "x" + std::to_string(img.width));
        }
        const RawImage rgb = to_rgb(img);
        std::vector<T> px(rgb.pixels.size());
        for (std::size_t i = 0; i < px.size(); ++i) px[i] = T(1) - static_cast<T>(rgb.pixels[i]);
        auto x = Tensor<T>::from({std::size_t(img.height), std::size_t(img.width), 3}, std::move(px));
        const std::size_t g = cfg_.grid(), d = cfg_.d_model;
        auto feat = conv2d(x, patch_w_, cfg_.patch_size, cfg_.patch_size);
        auto tokens = add(add_bias(reshape(feat, {g * g, d}), patch_b_), pos_);
        for (const auto& b : blocks_) tokens = b.forward(tokens, full_);
        return FeatureMap<T>{g, g, d, reshape(tokens, {g, g, d}), prov};
    }

    /// Encodes the global view and all tiles; tiles come back row-major.
    std::pair<FeatureMap<T>, std::vector<FeatureMap<T>>> encode_all(const SlicedImage& sliced) const {
        auto global = encode(sliced.global, Provenance::global());
        std::vector<FeatureMap<T>> subs;
        subs.reserve(sliced.subs.size());
        for (int r = 0; r < sliced.rows; ++r)
            for (int c = 0; c < sliced.cols; ++c) subs.push_back(encode(sliced.sub(r, c), Provenance::sub(r, c)));
        return {std::move(global), std::move(subs)};
    }

private:
    EncoderConfig cfg_;
    Tensor<T> patch_w_, patch_b_, pos_;
    std::vector<TransformerBlock<T>> blocks_;
    std::shared_ptr<const KeySets> full_;
};

}  // namespace doccomp
