// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <set>

#include "doccomp/compressor.hpp"
#include "doccomp/grad_check.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace doccomp;
using testutil::random_tensor;

namespace {

struct Fixture {
    std::size_t R, C, h, w, d;
    FeatureMap<double> global;
    std::vector<FeatureMap<double>> tiles;
};

Fixture make_fixture(std::size_t R, std::size_t C, std::size_t h, std::size_t w, std::size_t d, Rng& rng) {
    Fixture f{R, C, h, w, d, {}, {}};
    f.global = {h, w, d, random_tensor({h, w, d}, rng), Provenance::global()};
    for (std::size_t x = 0; x < R; ++x)
        for (std::size_t y = 0; y < C; ++y)
            f.tiles.push_back({h, w, d, random_tensor({h, w, d}, rng), Provenance::sub(int(x), int(y))});
    return f;
}

std::vector<double> layer_weights(ParameterStore<double>& store, int layer, const char* which) {
    return store.at("compressor.layer" + std::to_string(layer) + "." + which).tensor.values();
}

}  // namespace

TEST_CASE("reorganize places tile cells on the canvas") {
    Rng rng(1);
    auto f = make_fixture(2, 3, 2, 4, 3, rng);
    auto m = reorganize(f.tiles, 2, 3);
    REQUIRE(m.values.shape() == Shape{4, 12, 3});
    for (std::size_t x = 0; x < 2; ++x)
        for (std::size_t y = 0; y < 3; ++y)
            for (std::size_t i = 0; i < 2; ++i)
                for (std::size_t j = 0; j < 4; ++j)
                    for (std::size_t c = 0; c < 3; ++c)
                        REQUIRE(m.values[((x * 2 + i) * 12 + y * 4 + j) * 3 + c] ==
                                f.tiles[x * 3 + y].values[(i * 4 + j) * 3 + c]);
    auto back = split_tiles(m);
    for (std::size_t t = 0; t < 6; ++t) REQUIRE(back[t].values.values() == f.tiles[t].values.values());

    auto missing = f.tiles;
    missing.pop_back();
    REQUIRE_THROWS_AS(reorganize(missing, 2, 3), ConsistencyError);
    auto ragged = f.tiles;
    ragged[2].values = random_tensor({2, 3, 3}, rng);
    REQUIRE_THROWS_AS(reorganize(ragged, 2, 3), ConsistencyError);
}

TEST_CASE("group_of returns the R x C block and validates range") {
    auto g = group_of(2, 3, 2, 3, 4, 5);
    REQUIRE(g.size() == 6);
    REQUIRE(g.front() == std::pair<std::size_t, std::size_t>{3, 7});
    REQUIRE(g.back() == std::pair<std::size_t, std::size_t>{4, 9});
    REQUIRE_THROWS_AS(group_of(0, 1, 2, 2, 3, 3), DimensionError);
    REQUIRE_THROWS_AS(group_of(4, 1, 2, 2, 3, 3), DimensionError);
    REQUIRE_THROWS_AS(group_of(1, 4, 2, 2, 3, 3), DimensionError);
}

TEST_CASE("groups partition the reorganized map") {
    for (std::size_t R = 1; R <= 4; ++R)
        for (std::size_t C = 1; R * C <= 12; ++C)
            for (std::size_t h = 1; h <= 3; ++h)
                for (std::size_t w = 1; w <= 3; ++w) {
                    std::set<std::pair<std::size_t, std::size_t>> seen;
                    for (std::size_t i = 1; i <= h; ++i)
                        for (std::size_t j = 1; j <= w; ++j) {
                            auto g = group_of(i, j, R, C, h, w);
                            REQUIRE(g == oracle::brute_group(i, j, R, C, h, w));
                            for (auto c : g) REQUIRE(seen.insert(c).second);
                        }
                    REQUIRE(seen.size() == R * C * h * w);
                }
}

TEST_CASE("zero value projection returns the global map bit-exactly") {
    Rng rng(2);
    auto f = make_fixture(2, 2, 3, 2, 4, rng);
    ParameterStore<double> store;
    Compressor<double> comp(CompressorSpec{}, 4, 3, 2, store, rng);
    for (int l = 0; l < 2; ++l) {
        auto wv = store.at("compressor.layer" + std::to_string(l) + ".wv").tensor.mutable_data();
        std::fill(wv.begin(), wv.end(), 0.0);
    }
    auto out = comp.compress(f.global, reorganize(f.tiles, 2, 2));
    REQUIRE(out.values() == f.global.values.values());
}

TEST_CASE("single tile with identity values adds the tile to the global map") {
    Rng rng(3);
    auto f = make_fixture(1, 1, 3, 3, 4, rng);
    ParameterStore<double> store;
    CompressorSpec spec;
    spec.layers = 1;
    Compressor<double> comp(spec, 4, 3, 3, store, rng);
    auto zero = [&](const char* n) {
        auto t = store.at(std::string("compressor.layer0.") + n).tensor.mutable_data();
        std::fill(t.begin(), t.end(), 0.0);
        return t;
    };
    zero("wq");
    zero("wk");
    auto wv = zero("wv");
    for (std::size_t i = 0; i < 4; ++i) wv[i * 4 + i] = 1.0;
    auto out = comp.compress(f.global, reorganize(f.tiles, 1, 1));
    for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(out[i] == f.global.values[i] + f.tiles[0].values[i]);
}

TEST_CASE("group attention matches the per-query oracle on random configs") {
    Rng rng(4);
    for (int cfg = 0; cfg < 60; ++cfg) {
        const std::size_t R = 1 + rng.below(4), C = 1 + rng.below(3);
        const std::size_t h = 1 + rng.below(4), w = 1 + rng.below(4);
        const std::size_t heads = 1 + rng.below(2), d = heads * (1 + rng.below(4));
        const int layers = 1 + int(rng.below(3));
        auto f = make_fixture(R, C, h, w, d, rng);
        ParameterStore<double> store;
        CompressorSpec spec;
        spec.layers = layers;
        spec.heads = int(heads);
        Compressor<double> comp(spec, d, h, w, store, rng);
        auto out = comp.compress(f.global, reorganize(f.tiles, R, C));
        std::vector<oracle::Mat> wq, wk, wv, tiles;
        for (int l = 0; l < layers; ++l) {
            wq.push_back(layer_weights(store, l, "wq"));
            wk.push_back(layer_weights(store, l, "wk"));
            wv.push_back(layer_weights(store, l, "wv"));
        }
        for (auto& t : f.tiles) tiles.push_back(t.values.values());
        auto ref = oracle::group_compress(f.global.values.values(), tiles, R, C, h, w, d, heads, wq, wk, wv);
        REQUIRE(testutil::max_abs_diff(out.values(), ref) <= 1e-9);
    }
}

TEST_CASE("ablation variants") {
    Rng rng(5);
    const std::size_t R = 2, C = 2, h = 2, w = 3, d = 4;
    auto f = make_fixture(R, C, h, w, d, rng);
    auto reorg = reorganize(f.tiles, R, C);

    SECTION("group_mean adds the mean of each group") {
        ParameterStore<double> store;
        CompressorSpec spec;
        spec.kind = CompressorKind::GroupMean;
        Compressor<double> comp(spec, d, h, w, store, rng);
        REQUIRE(store.size() == 0);
        auto out = comp.compress(f.global, reorg);
        for (std::size_t i = 1; i <= h; ++i)
            for (std::size_t j = 1; j <= w; ++j)
                for (std::size_t c = 0; c < d; ++c) {
                    double s = 0.0;
                    auto g = oracle::brute_group(i, j, R, C, h, w);
                    for (auto [a, b] : g) s += reorg.values[((a - 1) * C * w + (b - 1)) * d + c];
                    const std::size_t q = (i - 1) * w + (j - 1);
                    REQUIRE(std::abs(out[q * d + c] - (f.global.values[q * d + c] + s / g.size())) <= 1e-12);
                }
    }
    SECTION("complete attention sees every tile token") {
        ParameterStore<double> store;
        CompressorSpec spec;
        spec.kind = CompressorKind::CompleteAtt;
        spec.layers = 1;
        Compressor<double> comp(spec, d, h, w, store, rng);
        std::vector<std::vector<double>> weights;
        auto out = comp.compress(f.global, reorg, &weights);
        REQUIRE(out.shape() == Shape{h * w, d});
        REQUIRE(weights[0].size() == h * w * R * C * h * w);
    }
    SECTION("resampler emits query_count tokens") {
        ParameterStore<double> store;
        CompressorSpec spec;
        spec.kind = CompressorKind::Resampler;
        spec.query_count = 5;
        Compressor<double> comp(spec, d, h, w, store, rng);
        REQUIRE(comp.compress(f.global, reorg).shape() == Shape{5, d});
        spec.placement = Placement::AfterVit;
        REQUIRE_THROWS_AS(spec.validate(), ConfigError);
    }
    SECTION("adaptive mean pools the canvas to the global grid") {
        ParameterStore<double> store;
        CompressorSpec spec;
        spec.kind = CompressorKind::AdaptiveMean;
        Compressor<double> comp(spec, d, h, w, store, rng);
        auto out = comp.compress(f.global, reorg);
        // R = C = 2, so each output cell is the mean of its 2x2 group.
        for (std::size_t q = 0; q < h * w; ++q)
            for (std::size_t c = 0; c < d; ++c) {
                double s = 0.0;
                auto g = oracle::brute_group(q / w + 1, q % w + 1, R, C, h, w);
                for (auto [a, b] : g) s += reorg.values[((a - 1) * C * w + (b - 1)) * d + c];
                REQUIRE(std::abs(out[q * d + c] - s / 4.0) <= 1e-12);
            }
    }
    SECTION("shape mismatches are rejected") {
        ParameterStore<double> store;
        Compressor<double> comp(CompressorSpec{}, d, h, w, store, rng);
        auto other = make_fixture(1, 2, h + 1, w, d, rng);
        REQUIRE_THROWS_AS(comp.compress(f.global, reorganize(other.tiles, 1, 2)), ConsistencyError);
        REQUIRE_THROWS_AS(comp.compress(other.global, reorg), DimensionError);
    }
}

TEST_CASE("variant names round trip") {
    for (auto k : {CompressorKind::GroupAtt, CompressorKind::CompleteAtt, CompressorKind::GroupMean,
                   CompressorKind::Resampler, CompressorKind::AdaptiveMean})
        REQUIRE(parse_compressor_kind(to_string(k)) == k);
    REQUIRE(parse_placement("after_vit") == Placement::AfterVit);
    REQUIRE_THROWS_AS(parse_compressor_kind("bogus"), ConfigError);
}

TEST_CASE("complete vs group attention FLOP ratio equals the map size") {
    CompressorSpec g, c;
    c.kind = CompressorKind::CompleteAtt;
    for (std::size_t rc : {1, 4, 9, 12}) {
        auto fg = compressor_flops(g, 36, 9, rc, 1, 64);
        auto fc = compressor_flops(c, 36, 9, rc, 1, 64);
        REQUIRE(fc.attention / fg.attention == 36.0 * 9.0);
    }
}

TEST_CASE("compressor gradient check") {
    for (int s = 0; s < 20; ++s) {
        Rng rng(300 + s);
        auto f = make_fixture(2, 1, 2, 2, 4, rng);
        ParameterStore<double> store;
        CompressorSpec spec;
        spec.heads = 2;
        Compressor<double> comp(spec, 4, 2, 2, store, rng);
        auto r = random_tensor({4, 4}, rng);
        std::vector<NamedTensor> ps{{"global", f.global.values}, {"tile0", f.tiles[0].values}};
        for (auto& p : store) ps.push_back({p.name, p.tensor});
        auto rep = grad_check([&] { return testutil::project(comp.compress(f.global, reorganize(f.tiles, 2, 1)), r); },
                              ps);
        INFO(rep.max_rel_error << " at " << rep.worst_location);
        REQUIRE(rep.passed);
    }
}
