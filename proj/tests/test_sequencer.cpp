// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <set>

#include "doccomp/sequencer.hpp"

using namespace doccomp;

namespace {

// Walks one prefill pass position by position and layer by layer, adding up
// multiply-adds of every matrix product it touches.
double naive_prefill_flops(std::size_t L, const DecoderConfig& c) {
    const double d = c.d_model, ff = c.d_ff, V = c.vocab_size;
    double macs = 0.0;
    for (std::size_t t = 0; t < L; ++t) {
        for (int layer = 0; layer < c.depth; ++layer) {
            macs += 4 * d * d;                 // q, k, v, o projections
            macs += 2 * d * double(t + 1);     // scores and weighted values over t+1 keys
            macs += 2 * d * ff;                // two MLP matrices
        }
        macs += d * V;  // unembedding
    }
    return 2.0 * macs;
}

}  // namespace

TEST_CASE("token budget reproduces the reference counts") {
    for (int rc = 1; rc <= 12; ++rc) {
        for (int r = 1; r <= rc; ++r) {
            if (rc % r) continue;
            auto b = budget(504, 14, r, rc / r);
            REQUIRE(b.per_image_compressed == 324);
            REQUIRE(b.per_image_uncompressed == std::size_t(rc + 1) * 324);
        }
    }
    auto b = budget(448, 14, 3, 3);
    REQUIRE(b.h == 32);
    REQUIRE(b.per_image_compressed == 256);
    REQUIRE(b.per_image_uncompressed == 2560);
    REQUIRE(b.ratio == 10);
    REQUIRE(budget(56, 14, 2, 2).per_image_compressed == 4);
}

TEST_CASE("token budget rejects geometry the reducer cannot use") {
    REQUIRE_THROWS_AS(budget(500, 14, 1, 1), ConfigError);
    REQUIRE_THROWS_AS(budget(42, 14, 1, 1), ConfigError);
    REQUIRE_THROWS_AS(budget(56, 14, 0, 2), ConfigError);
}

TEST_CASE("ordinal tokens sit above the byte range and are distinct") {
    std::set<std::size_t> ids;
    for (std::size_t k = 1; k <= vocab::kMaxImages; ++k) {
        const auto id = vocab::image_token(k);
        REQUIRE(id >= vocab::kBytes);
        REQUIRE(id != vocab::kBos);
        REQUIRE(id != vocab::kEos);
        REQUIRE(vocab::is_image_token(id));
        ids.insert(id);
    }
    REQUIRE(ids.size() == vocab::kMaxImages);
    REQUIRE_THROWS_AS(vocab::image_token(0), ArgumentError);
    REQUIRE_THROWS_AS(vocab::image_token(13), ArgumentError);
    REQUIRE(vocab::decode(vocab::encode("AB 9")) == "AB 9");
    REQUIRE(vocab::decode({vocab::image_token(3), 'x', vocab::kEos}) == "<img 3>x");
}

TEST_CASE("assemble interleaves ordinals and visual blocks before the instruction") {
    auto seq = assemble({2, 3}, vocab::encode("hi"));
    REQUIRE(seq.total_len() == 1 + 2 + 1 + 3 + 2);
    REQUIRE(seq.images == 2);
    REQUIRE(seq.slots[0].id == vocab::image_token(1));
    REQUIRE(seq.slots[1].kind == SequenceSlot::Kind::Visual);
    REQUIRE(seq.slots[2].index == 1);
    REQUIRE(seq.slots[3].id == vocab::image_token(2));
    REQUIRE(seq.slots[6].image == 1);
    REQUIRE(seq.slots[6].index == 2);
    REQUIRE(seq.slots[7].id == 'h');

    std::vector<std::size_t> twelve(12, 4);
    auto full = assemble(twelve, {});
    REQUIRE(full.total_len() == 12 * 5);
    REQUIRE(full.slots[55].id == vocab::image_token(12));

    REQUIRE_THROWS_AS(assemble({}, {}), ArgumentError);
    REQUIRE_THROWS_AS(assemble(std::vector<std::size_t>(13, 1), {}), ArgumentError);
    REQUIRE_THROWS_AS(assemble({1}, {vocab::kSize}), ArgumentError);
}

TEST_CASE("prefill FLOP formula matches a per-position count") {
    for (auto c : {DecoderConfig{}, DecoderConfig{.d_model = 32, .depth = 3, .heads = 2, .d_ff = 96},
                   DecoderConfig{.d_model = 4096, .depth = 32, .heads = 32, .d_ff = 11008, .vocab_size = 32000}}) {
        for (std::size_t L : {1, 2, 7, 324, 2560}) {
            const double a = count_prefill_flops(L, c), b = naive_prefill_flops(L, c);
            REQUIRE(std::abs(a - b) <= 1e-12 * b);
        }
    }
}

TEST_CASE("compressed prefill is at least the token ratio cheaper") {
    for (auto c : {DecoderConfig{}, DecoderConfig{.d_model = 4096, .depth = 32, .heads = 32, .d_ff = 11008,
                                                  .vocab_size = 32000}}) {
        const double ratio = count_prefill_flops(2560, c) / count_prefill_flops(324, c);
        REQUIRE(ratio >= 2560.0 / 324.0);
        REQUIRE(ratio >= 7.9);
    }
}
