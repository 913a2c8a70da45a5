// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>

#include "doccomp/decoder.hpp"
#include "doccomp/grad_check.hpp"
#include "doccomp/train.hpp"
#include "test_util.hpp"

using namespace doccomp;
using testutil::random_tensor;

namespace {

DecoderConfig small_config(bool rotary = false) {
    return DecoderConfig{.d_model = 8, .depth = 2, .heads = 2, .d_ff = 12, .vocab_size = int(vocab::kSize), .max_seq = 24,
                         .rotary = rotary};
}

void zero_param(ParameterStore<double>& store, const std::string& name) {
    auto w = store.at(name).tensor.mutable_data();
    std::fill(w.begin(), w.end(), 0.0);
}

}  // namespace

TEST_CASE("uniform logits give a loss of log V per token") {
    ParameterStore<double> store;
    Rng rng(1);
    ToyDecoder<double> dec(small_config(), store, rng);
    zero_param(store, "decoder.head.weight");
    auto seq = assemble({2}, vocab::encode("go"));
    std::vector<Tensor<double>> vis{random_tensor({2, 8}, rng)};
    auto loss = dec.decode_loss(seq, vis, {'A', 'B', vocab::kEos});
    REQUIRE(std::abs(loss.item() - std::log(double(vocab::kSize))) <= 1e-12);
    REQUIRE(dec.decode_loss(seq, vis, {}).item() == 0.0);
}

TEST_CASE("decoder input validation") {
    ParameterStore<double> store;
    Rng rng(2);
    ToyDecoder<double> dec(small_config(), store, rng);
    std::vector<Tensor<double>> vis{random_tensor({3, 8}, rng)};
    REQUIRE_THROWS_AS(dec.decode_loss(assemble({3}, vocab::encode(std::string(20, 'x'))), vis, {'a', 'b'}),
                      ConfigError);
    REQUIRE_THROWS_AS(dec.logits(assemble({3, 3}, {}), vis, {}), ConsistencyError);
    REQUIRE_THROWS_AS(dec.logits(assemble({2}, {}), vis, {}), DimensionError);
    REQUIRE_THROWS_AS(dec.logits(assemble({3}, {}), {random_tensor({3, 7}, rng)}, {}), DimensionError);
}

TEST_CASE("decoder gradient check") {
    const bool rotary = GENERATE(false, true);
    for (int s = 0; s < 20; ++s) {
        ParameterStore<double> store;
        Rng rng(100 + s);
        ToyDecoder<double> dec(small_config(rotary), store, rng);
        auto seq = assemble({2, 1}, vocab::encode("q"));
        std::vector<Tensor<double>> vis{random_tensor({2, 8}, rng), random_tensor({1, 8}, rng)};
        std::vector<NamedTensor> ps{{"visual0", vis[0]}, {"visual1", vis[1]}};
        for (auto& p : store) ps.push_back({p.name, p.tensor});
        GradCheckOptions opt;
        opt.max_coords_per_tensor = 40;
        opt.seed = std::uint64_t(s);
        auto rep = grad_check([&] { return dec.decode_loss(seq, vis, {'7', vocab::kEos}); }, ps, opt);
        INFO(rep.max_rel_error << " at " << rep.worst_location);
        REQUIRE(rep.passed);
    }
}

TEST_CASE("cached incremental logits equal the full forward") {
    const bool rotary = GENERATE(false, true);
    ParameterStore<double> store;
    Rng rng(3);
    ToyDecoder<double> dec(small_config(rotary), store, rng);
    auto seq = assemble({3, 2}, vocab::encode("abc"));
    std::vector<Tensor<double>> vis{random_tensor({3, 8}, rng), random_tensor({2, 8}, rng)};
    const std::vector<std::size_t> extra{'z', 'y'};
    auto full = dec.logits(seq, vis, extra);
    auto cached = dec.cached_logits(dec.embed_inputs(seq, vis, extra));
    const std::size_t V = vocab::kSize;
    REQUIRE(cached.size() == full.extent(0));
    double worst = 0.0;
    for (std::size_t r = 0; r < cached.size(); ++r)
        for (std::size_t v = 0; v < V; ++v) worst = std::max(worst, std::abs(cached[r][v] - full[r * V + v]));
    REQUIRE(worst <= 1e-12);
}

TEST_CASE("rotary decoders carry no absolute position table") {
    ParameterStore<double> learned, rotary;
    Rng a(1), b(1);
    ToyDecoder<double> dl(small_config(false), learned, a);
    ToyDecoder<double> dr(small_config(true), rotary, b);
    REQUIRE_NOTHROW(learned.at("decoder.pos"));
    REQUIRE_THROWS_AS(rotary.at("decoder.pos"), ArgumentError);
    auto odd = small_config(true);
    odd.heads = 8;  // head width 1
    REQUIRE_THROWS_AS(odd.validate(), ConfigError);
}

TEST_CASE("generation stops at eos and respects the length cap") {
    ParameterStore<double> store;
    Rng rng(4);
    ToyDecoder<double> dec(small_config(), store, rng);
    zero_param(store, "decoder.head.weight");
    auto bias = store.at("decoder.head.bias").tensor.mutable_data();
    std::fill(bias.begin(), bias.end(), 0.0);
    auto seq = assemble({1}, {});
    std::vector<Tensor<double>> vis{random_tensor({1, 8}, rng)};
    bias['Q'] = 1.0;
    REQUIRE(vocab::decode(dec.generate(seq, vis, 5)) == "QQQQQ");
    bias[vocab::kEos] = 2.0;
    REQUIRE(dec.generate(seq, vis, 5).empty());
}

TEST_CASE("decoder memorizes a handful of visual-conditioned targets") {
    ParameterStore<float> store;
    Rng rng(5);
    DecoderConfig cfg{.d_model = 16, .depth = 1, .heads = 2, .d_ff = 32, .vocab_size = int(vocab::kSize), .max_seq = 16};
    ToyDecoder<float> dec(cfg, store, rng);
    const std::vector<std::string> targets{"AB", "CD", "EF", "GH"};
    std::vector<Tensor<float>> vis;
    for (std::size_t i = 0; i < targets.size(); ++i) vis.push_back(random_tensor<float>({2, 16}, rng));
    auto seq = assemble({2}, vocab::encode("?"));
    Adam<float> adam;
    for (int step = 0; step < 300; ++step) {
        store.zero_grad();
        for (std::size_t i = 0; i < targets.size(); ++i) {
            auto ids = vocab::encode(targets[i]);
            ids.push_back(vocab::kEos);
            dec.decode_loss(seq, {vis[i]}, ids).backward();
        }
        adam.step(store, 1e-2);
    }
    NoGradGuard ng;
    for (std::size_t i = 0; i < targets.size(); ++i) REQUIRE(vocab::decode(dec.generate(seq, {vis[i]}, 6)) == targets[i]);
}
