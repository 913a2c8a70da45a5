// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "doccomp/config.hpp"
#include "doccomp/pipeline.hpp"
#include "doccomp/serialize.hpp"
#include "doccomp/train.hpp"

namespace doccomp {

/// Budget report line for one image pushed through the pipeline.
struct PipelineRow {
    std::string image;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t uncompressed = 0;  // tokens the decoder would see without compression
    std::size_t compressed = 0;    // tokens the budget calculator predicts
    std::size_t emitted = 0;       // tokens the pipeline actually produced
};

/// Encodes each image, writes OUT/<stem>.tokens.dtc plus OUT/budget.csv, and
/// returns the budget rows. A disagreement between calculator and pipeline is
/// a ConsistencyError.
template <typename T>
std::vector<PipelineRow> run_pipeline(const Model<T>& model, const std::vector<std::filesystem::path>& images,
                                      const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto& cfg = model.config();
    std::vector<PipelineRow> rows;
    for (const auto& path : images) {
        const auto enc = model.encode_page(read_image(path));
        const auto b = budget(cfg.encoder.base, cfg.encoder.patch_size, enc.plan.rows, enc.plan.cols);
        PipelineRow r{path.filename().string(), std::size_t(enc.plan.rows), std::size_t(enc.plan.cols),
                      b.per_image_uncompressed, model.tokens_per_page(), enc.tokens.extent(0)};
        if (r.emitted != r.compressed) {
            throw ConsistencyError("cli-bench", r.image + ": pipeline emitted " + std::to_string(r.emitted) +
                                                    " tokens, budget says " + std::to_string(r.compressed));
        }
        save_tensor(out_dir / (path.stem().string() + ".tokens.dtc"), enc.tokens);
        rows.push_back(r);
    }
    std::ofstream os(out_dir / "budget.csv");
    if (!os) throw IoError("cli-bench", "cannot write " + (out_dir / "budget.csv").string());
    os << "image,rows,cols,uncompressed,compressed,emitted\n";
    for (const auto& r : rows)
        os << r.image << ',' << r.rows << ',' << r.cols << ',' << r.uncompressed << ',' << r.compressed << ','
           << r.emitted << '\n';
    return rows;
}

/// Short label of a model variant, e.g. "group_att/after_reducer/L2".
inline std::string variant_label(const ModelConfig& m) {
    std::string s = to_string(m.compressor.kind) + "/" + to_string(m.compressor.placement) + "/L" +
                    std::to_string(m.compressor.layers);
    if (m.compressor.query_count > 0) s += "/Q" + std::to_string(m.compressor.query_count);
    return s;
}

/// One trained and evaluated variant.
struct AblationResult {
    std::string variant;
    std::uint64_t seed = 0;
    std::size_t tokens = 0;     // visual tokens per page
    double accuracy = 0.0;      // single-page parse character accuracy
    double compressor_flops = 0.0;
    double prefill_flops = 0.0;  // decoder prefill of one single-page parse prompt
    double wall_ms = 0.0;        // training plus evaluation
};

/// Trains every row under one stage on one shared corpus and evaluates on
/// one shared held-out corpus. Rows must agree on corpus and seed; they may
/// differ only in the model.
inline std::vector<AblationResult> run_ablation(const std::vector<RunConfig>& rows, const TrainStage& stage,
                                                const std::function<void(const AblationResult&)>& on_row = nullptr) {
    if (rows.empty()) throw ConfigError("cli-bench", "ablation needs at least one row");
    for (const auto& r : rows) {
        if (!(r.corpus == rows.front().corpus) || r.seed != rows.front().seed) {
            throw ConfigError("cli-bench", "ablation rows " + variant_label(rows.front().model) + " and " +
                                               variant_label(r.model) + " use different corpora or seeds");
        }
        r.model.validate();
    }
    const auto& corpus_cfg = rows.front().corpus;
    const std::uint64_t seed = rows.front().seed;
    TrainStage st = stage;
    st.samples = corpus_cfg.train_samples;
    const auto train_set = stage_corpus(st, seed, 0, corpus_cfg.task);
    const auto eval_set =
        gen_corpus(mix_seed(seed, 0xe7a1), TaskKind::SingleParse, corpus_cfg.eval_samples, 1, 1, corpus_cfg.task);
    std::vector<AblationResult> out;
    for (const auto& r : rows) {
        const auto t0 = std::chrono::steady_clock::now();
        Model<float> model(r.model, seed);
        TrainLog log;
        run_stage(model, st, 0, train_set, seed, corpus_cfg.task, log);
        const auto metrics = evaluate(model, eval_set);
        const auto t1 = std::chrono::steady_clock::now();
        const auto& page = eval_set.front().pages.front().image;
        const auto plan = model.plan_for(page);
        const auto seq = model.prepare({page}, eval_set.front().instruction).first;
        AblationResult res;
        res.variant = variant_label(r.model);
        res.seed = seed;
        res.tokens = model.tokens_per_page();
        res.accuracy = metrics.get(TaskKind::SingleParse, "1");
        res.compressor_flops = model.compressor_cost(plan.rows, plan.cols).total();
        res.prefill_flops = count_prefill_flops(seq.total_len(), r.model.decoder);
        res.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        out.push_back(res);
        if (on_row) on_row(res);
    }
    return out;
}

inline void write_ablation_csv(std::ostream& os, const std::vector<AblationResult>& rows) {
    os << "variant,seed,tokens,accuracy,compressor_flops,prefill_flops,wall_ms\n";
    for (const auto& r : rows)
        os << r.variant << ',' << r.seed << ',' << r.tokens << ',' << r.accuracy << ',' << r.compressor_flops << ','
           << r.prefill_flops << ',' << r.wall_ms << '\n';
}

}  // namespace doccomp
