// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doccomp/compressor.hpp"
#include "doccomp/config.hpp"
#include "doccomp/cropper.hpp"
#include "doccomp/decoder.hpp"
#include "doccomp/encoder.hpp"
#include "doccomp/h_reducer.hpp"
#include "doccomp/sequencer.hpp"
#include "doccomp/serialize.hpp"

namespace doccomp {

/// Everything one page turns into on its way to the decoder.
template <typename T>
struct PageEncoding {
    CropPlan plan;
    Tensor<T> tokens;  // [n, d_hat]
};

/// Crop -> encode -> (reduce, compress) -> decoder, with one parameter store.
///
/// Module parameters are drawn from separate seed streams, so models that
/// differ only in the compressor share identical encoder, reducer and
/// decoder initializations.
template <typename T>
class Model {
public:
    Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        const std::size_t g = cfg_.encoder.grid();
        const std::size_t d = cfg_.encoder.d_model;
        Rng enc_rng(mix_seed(seed, 1)), red_rng(mix_seed(seed, 2)), comp_rng(mix_seed(seed, 3)),
            dec_rng(mix_seed(seed, 4));
        encoder_ = std::make_unique<VisualEncoder<T>>(cfg_.encoder, store_, enc_rng);
        reducer_ = std::make_unique<HReducer<T>>(d, std::size_t(cfg_.d_hat), store_, red_rng);
        if (cfg_.compressor.placement == Placement::AfterReducer) {
            compressor_ = std::make_unique<Compressor<T>>(cfg_.compressor, std::size_t(cfg_.d_hat), g, g / 4, store_,
                                                          comp_rng);
        } else {
            compressor_ = std::make_unique<Compressor<T>>(cfg_.compressor, d, g, g, store_, comp_rng);
        }
        decoder_ = std::make_unique<ToyDecoder<T>>(cfg_.decoder, store_, dec_rng);
    }

    const ModelConfig& config() const { return cfg_; }
    ParameterStore<T>& params() { return store_; }
    const ParameterStore<T>& params() const { return store_; }
    const ToyDecoder<T>& decoder() const { return *decoder_; }
    const VisualEncoder<T>& encoder() const { return *encoder_; }

    CropPlan plan_for(const RawImage& img) const {
        if (cfg_.crop_rows > 0) return fixed_plan(img, cfg_.crop_rows, cfg_.crop_cols, cfg_.encoder.base);
        return plan_crops(img, cfg_.max_crops, cfg_.encoder.base);
    }

    /// Number of visual tokens one page contributes.
    std::size_t tokens_per_page() const {
        if (cfg_.compressor.kind == CompressorKind::Resampler && cfg_.compressor.query_count > 0)
            return std::size_t(cfg_.compressor.query_count);
        const std::size_t g = cfg_.encoder.grid();
        return g * (g / 4);
    }

    PageEncoding<T> encode_page(const RawImage& img) const {
        PageEncoding<T> out;
        out.plan = plan_for(img);
        auto [global, tiles] = encoder_->encode_all(slice_image(img, out.plan));
        out.tokens = compress_maps(global, tiles, out.plan.rows, out.plan.cols);
        return out;
    }

    /// Encoder output maps of one page, before reduction and compression.
    std::pair<FeatureMap<T>, std::vector<FeatureMap<T>>> encode_maps(const RawImage& img) const {
        return encoder_->encode_all(slice_image(img, plan_for(img)));
    }

    /// Reduction and compression of encoder maps: global plus R*C row-major tiles.
    Tensor<T> compress_maps(const FeatureMap<T>& global, const std::vector<FeatureMap<T>>& tiles, std::size_t R,
                            std::size_t C) const {
        if (cfg_.compressor.placement == Placement::AfterReducer) {
            auto g = reducer_->reduce(global);
            std::vector<FeatureMap<T>> reduced;
            for (const auto& t : tiles) reduced.push_back(reducer_->reduce(t));
            return compressor_->compress(g, reorganize(reduced, R, C));
        }
        auto c = compressor_->compress(global, reorganize(tiles, R, C));
        FeatureMap<T> m{global.h, global.w, global.d, reshape(c, {global.h, global.w, global.d}),
                        Provenance::reorganized()};
        auto r = reducer_->reduce(m);
        return reshape(r.values, {r.h * r.w, r.d});
    }

    /// Compressor FLOPs for one page cut into R x C crops.
    CompressorFlops compressor_cost(std::size_t R, std::size_t C) const {
        const std::size_t g = cfg_.encoder.grid();
        if (cfg_.compressor.placement == Placement::AfterReducer)
            return compressor_flops(cfg_.compressor, g, g / 4, R, C, std::size_t(cfg_.d_hat));
        return compressor_flops(cfg_.compressor, g, g, R, C, std::size_t(cfg_.encoder.d_model));
    }

    /// Assembled sequence plus the visual blocks for a set of pages and an instruction.
    std::pair<AssembledSequence, std::vector<Tensor<T>>> prepare(const std::vector<RawImage>& pages,
                                                                  const std::string& instruction) const {
        std::vector<Tensor<T>> visuals;
        std::vector<std::size_t> counts;
        for (const auto& p : pages) {
            visuals.push_back(encode_page(p).tokens);
            counts.push_back(visuals.back().extent(0));
        }
        return {assemble(counts, vocab::encode(instruction)), std::move(visuals)};
    }

    static std::vector<std::size_t> target_ids(const std::string& target) {
        auto ids = vocab::encode(target);
        ids.push_back(vocab::kEos);
        return ids;
    }

    Tensor<T> loss(const std::vector<RawImage>& pages, const std::string& instruction, const std::string& target) const {
        auto [seq, visuals] = prepare(pages, instruction);
        return decoder_->decode_loss(seq, visuals, target_ids(target));
    }

    std::string answer(const std::vector<RawImage>& pages, const std::string& instruction, std::size_t max_new) const {
        NoGradGuard ng;
        auto [seq, visuals] = prepare(pages, instruction);
        const std::size_t room = std::size_t(cfg_.decoder.max_seq) - std::min<std::size_t>(seq.total_len(), cfg_.decoder.max_seq);
        return vocab::decode(decoder_->generate(seq, visuals, std::min(max_new, room)));
    }

    /// DIR/config.ini plus DIR/weights.{dtc,manifest}.
    void save(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        std::ofstream os(dir / "config.ini");
        if (!os) throw IoError("pipeline", "cannot write " + (dir / "config.ini").string());
        os << model_config_text(cfg_);
        save_parameters(dir / "weights", store_);
    }

    static Model load(const std::filesystem::path& dir) {
        const auto cfg = run_config_from(KeyValueFile::load(dir / "config.ini")).model;
        Model m(cfg, 0);
        load_parameters(dir / "weights", m.store_);
        return m;
    }

private:
    ModelConfig cfg_;
    ParameterStore<T> store_;
    std::unique_ptr<VisualEncoder<T>> encoder_;
    std::unique_ptr<HReducer<T>> reducer_;
    std::unique_ptr<Compressor<T>> compressor_;
    std::unique_ptr<ToyDecoder<T>> decoder_;
};

}  // namespace doccomp
