// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "doccomp/errors.hpp"

namespace doccomp {

/// Byte-level vocabulary plus reserved specials. Image ordinals live above the
/// byte range so they can never collide with text.
namespace vocab {

constexpr std::size_t kBytes = 256;
constexpr std::size_t kBos = 256;
constexpr std::size_t kEos = 257;
constexpr std::size_t kImageBase = 258;  // <img 1> = kImageBase
constexpr std::size_t kMaxImages = 12;
constexpr std::size_t kSize = kImageBase + kMaxImages;

/// Id of the 1-based ordinal token <img k>.
inline std::size_t image_token(std::size_t k) {
    if (k < 1 || k > kMaxImages) {
        throw ArgumentError("multi-image-sequencer", "image ordinal " + std::to_string(k) + " outside 1.." +
                                                         std::to_string(kMaxImages));
    }
    return kImageBase + k - 1;
}

inline bool is_image_token(std::size_t id) { return id >= kImageBase && id < kSize; }

inline std::vector<std::size_t> encode(const std::string& text) {
    std::vector<std::size_t> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(c);
    return ids;
}

/// Bytes become characters; specials are dropped except ordinals, which read back as "<img k>".
inline std::string decode(const std::vector<std::size_t>& ids) {
    std::string s;
    for (auto id : ids) {
        if (id < kBytes) s += static_cast<char>(id);
        else if (is_image_token(id)) s += "<img " + std::to_string(id - kImageBase + 1) + ">";
    }
    return s;
}

}  // namespace vocab

/// One position of an assembled decoder input.
struct SequenceSlot {
    enum class Kind { Token, Visual };
    Kind kind = Kind::Token;
    std::size_t id = 0;     // vocabulary id for Kind::Token
    std::size_t image = 0;  // 0-based image index for Kind::Visual
    std::size_t index = 0;  // position inside that image's compressed tokens
};

struct AssembledSequence {
    std::vector<SequenceSlot> slots;
    std::size_t images = 0;

    std::size_t total_len() const { return slots.size(); }
};

/// [<img 1>; V1; <img 2>; V2; ...; <img n>; Vn; T]. `visual_counts[k]` is the
/// number of compressed tokens of image k+1.
inline AssembledSequence assemble(const std::vector<std::size_t>& visual_counts,
                                  const std::vector<std::size_t>& instruction) {
    if (visual_counts.empty()) throw ArgumentError("multi-image-sequencer", "assemble needs at least one image");
    if (visual_counts.size() > vocab::kMaxImages) {
        throw ArgumentError("multi-image-sequencer", std::to_string(visual_counts.size()) + " images exceed the " +
                                                         std::to_string(vocab::kMaxImages) + " ordinal tokens");
    }
    AssembledSequence seq;
    seq.images = visual_counts.size();
    for (std::size_t k = 0; k < visual_counts.size(); ++k) {
        seq.slots.push_back({SequenceSlot::Kind::Token, vocab::image_token(k + 1), 0, 0});
        for (std::size_t t = 0; t < visual_counts[k]; ++t) seq.slots.push_back({SequenceSlot::Kind::Visual, 0, k, t});
    }
    for (auto id : instruction) {
        if (id >= vocab::kSize) throw ArgumentError("multi-image-sequencer", "token id " + std::to_string(id) + " out of vocabulary");
        seq.slots.push_back({SequenceSlot::Kind::Token, id, 0, 0});
    }
    return seq;
}

struct TokenBudget {
    int base = 0;
    int patch = 0;
    int rows = 1;
    int cols = 1;
    std::size_t h = 0;  // encoder grid
    std::size_t w = 0;
    std::size_t per_image_uncompressed = 0;  // (R*C + 1) * h * w/4
    std::size_t per_image_compressed = 0;    // h * w/4
    std::size_t ratio = 0;                   // R*C + 1
};

inline TokenBudget budget(int base, int patch, int rows, int cols) {
    if (base < 1 || patch < 1) throw ConfigError("multi-image-sequencer", "base and patch must be positive");
    if (rows < 1 || cols < 1) throw ConfigError("multi-image-sequencer", "rows and cols must be positive");
    if (base % patch != 0) {
        throw ConfigError("multi-image-sequencer", "base " + std::to_string(base) + " not divisible by patch " +
                                                       std::to_string(patch));
    }
    const std::size_t g = std::size_t(base / patch);
    if (g % 4 != 0) {
        throw ConfigError("multi-image-sequencer", "grid width " + std::to_string(g) + " not divisible by 4");
    }
    TokenBudget b;
    b.base = base;
    b.patch = patch;
    b.rows = rows;
    b.cols = cols;
    b.h = g;
    b.w = g;
    b.per_image_compressed = g * (g / 4);
    b.ratio = std::size_t(rows) * std::size_t(cols) + 1;
    b.per_image_uncompressed = b.ratio * b.per_image_compressed;
    return b;
}

/// Shape of the language decoder that consumes assembled sequences.
struct DecoderConfig {
    int d_model = 64;
    int depth = 2;
    int heads = 4;
    int d_ff = 256;
    int vocab_size = int(vocab::kSize);
    int max_seq = 512;
    // Rotary positions on queries and keys; false adds learned absolute
    // position embeddings to the inputs instead.
    bool rotary = false;

    void validate() const {
        if (d_model < 1 || depth < 0 || heads < 1 || d_ff < 1 || max_seq < 1 || vocab_size < 1) {
            throw ConfigError("toy-decoder", "decoder sizes must be positive");
        }
        if (d_model % heads != 0) throw ConfigError("toy-decoder", "heads: does not divide d_model");
        if (rotary && (d_model / heads) % 2 != 0) {
            throw ConfigError("toy-decoder", "position: rotary needs an even head width");
        }
    }
};

/// FLOPs of one causal prefill pass (multiply-add = 2 FLOPs), logits for
/// every position:
///
///   F(L) = L * [depth * (8 d^2 + 4 d d_ff) + 2 d V] + depth * 2 d L (L + 1)
///
/// The bracket is the per-token projection, MLP and unembedding cost; the
/// last term is QK^T plus AV under a causal mask (L(L+1)/2 pairs, each 2d
/// multiply-adds). F(1) is the per-token constant.
inline double count_prefill_flops(std::size_t seq_len, const DecoderConfig& cfg) {
    const double L = double(seq_len), d = cfg.d_model, ff = cfg.d_ff, V = cfg.vocab_size, n = cfg.depth;
    const double linear = L * (n * (8.0 * d * d + 4.0 * d * ff) + 2.0 * d * V);
    const double quadratic = n * 2.0 * d * L * (L + 1.0);
    return linear + quadratic;
}

}  // namespace doccomp
