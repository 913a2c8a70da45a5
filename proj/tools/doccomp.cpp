// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Exit codes: 0 success, 2 configuration or input
// error, 3 numerical failure, 1 anything else.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "doccomp/ablation.hpp"
#include "doccomp/config.hpp"
#include "doccomp/cropper.hpp"
#include "doccomp/image.hpp"
#include "doccomp/pipeline.hpp"
#include "doccomp/serialize.hpp"
#include "doccomp/synthetic.hpp"
#include "doccomp/train.hpp"

namespace fs = std::filesystem;
using namespace doccomp;

namespace {

RunConfig load_run_config(const std::string& path) {
    if (path.empty()) {
        std::istringstream empty;
        return run_config_from(KeyValueFile::parse(empty));
    }
    return run_config_from(KeyValueFile::load(path));
}

std::vector<std::string> split_list(const std::string& s) { return KeyValueFile::split(s, ','); }

/// "VARIANT[:PLACEMENT]" applied to a model config.
ModelConfig with_variant(ModelConfig m, const std::string& item) {
    const auto colon = item.find(':');
    m.compressor.kind = parse_compressor_kind(item.substr(0, colon));
    if (colon != std::string::npos) m.compressor.placement = parse_placement(item.substr(colon + 1));
    m.validate();
    return m;
}

/// Most square R x C factorization of n (rows <= cols).
std::pair<int, int> grid_for(int n) {
    int r = 1;
    for (int k = 1; k * k <= n; ++k)
        if (n % k == 0) r = k;
    return {r, n / r};
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int cmd_crop_plan(const std::string& image, int max_crops, int base) {
    const auto plan = plan_crops(read_image(image), max_crops, base);
    std::cout << "rows,cols\n" << plan.rows << ',' << plan.cols << '\n';
    std::cout << "row,col,top,left,height,width\n";
    for (const auto& s : plan.sub_rects)
        std::cout << s.row << ',' << s.col << ',' << s.rect.top << ',' << s.rect.left << ',' << s.rect.height << ','
                  << s.rect.width << '\n';
    return 0;
}

int cmd_encode(const std::string& image, const std::string& config, const std::string& model_dir,
               std::uint64_t seed, const std::string& out) {
    const Model<float> model = model_dir.empty() ? Model<float>(load_run_config(config).model, seed)
                                                 : Model<float>::load(model_dir);
    const auto img = read_image(image);
    const auto plan = model.plan_for(img);
    auto [global, tiles] = model.encode_maps(img);
    fs::create_directories(out);
    save_tensor(fs::path(out) / "global.dtc", global.values);
    for (std::size_t t = 0; t < tiles.size(); ++t)
        save_tensor(fs::path(out) / ("tile_" + std::to_string(t) + ".dtc"), tiles[t].values);
    std::ofstream os(fs::path(out) / "maps.txt");
    os << "rows = " << plan.rows << "\ncols = " << plan.cols << "\n";
    std::cout << "rows,cols,h,w,d\n"
              << plan.rows << ',' << plan.cols << ',' << global.h << ',' << global.w << ',' << global.d << '\n';
    return 0;
}

int cmd_compress(const std::string& maps, const std::string& variant, const std::string& placement, int layers,
                 const std::string& config, const std::string& model_dir, std::uint64_t seed, const std::string& out) {
    ModelConfig cfg = model_dir.empty() ? load_run_config(config).model
                                        : run_config_from(KeyValueFile::load(fs::path(model_dir) / "config.ini")).model;
    if (!model_dir.empty() && (parse_compressor_kind(variant) != cfg.compressor.kind ||
                               parse_placement(placement) != cfg.compressor.placement)) {
        throw ConfigError("cli-bench", "compress: --variant/--placement differ from the checkpoint in " + model_dir);
    }
    cfg.compressor.kind = parse_compressor_kind(variant);
    cfg.compressor.placement = parse_placement(placement);
    if (layers > 0) cfg.compressor.layers = layers;
    const Model<float> model = model_dir.empty() ? Model<float>(cfg, seed) : Model<float>::load(model_dir);
    const auto meta = KeyValueFile::load(fs::path(maps) / "maps.txt");
    const auto R = std::size_t(meta.integer("rows", 0)), C = std::size_t(meta.integer("cols", 0));
    if (R == 0 || C == 0) throw ConsistencyError("cli-bench", "maps.txt lacks rows/cols");
    auto as_map = [](const Tensor<float>& t, Provenance p) {
        if (t.rank() != 3) throw DimensionError("cli-bench", "feature map must be rank 3, got " + shape_str(t.shape()));
        return FeatureMap<float>{t.extent(0), t.extent(1), t.extent(2), t, p};
    };
    const auto global = as_map(load_tensor<float>(fs::path(maps) / "global.dtc"), Provenance::global());
    std::vector<FeatureMap<float>> tiles;
    for (std::size_t t = 0; t < R * C; ++t) {
        const auto path = fs::path(maps) / ("tile_" + std::to_string(t) + ".dtc");
        if (!fs::exists(path)) throw ConsistencyError("cli-bench", "missing " + path.string());
        tiles.push_back(as_map(load_tensor<float>(path), Provenance::sub(int(t / C), int(t % C))));
    }
    const auto tokens = model.compress_maps(global, tiles, R, C);
    save_tensor(out, tokens);
    std::cout << "tokens,d\n" << tokens.extent(0) << ',' << tokens.extent(1) << '\n';
    return 0;
}

int cmd_tokens(int base, int patch, int rows, int cols, int images) {
    if (images < 1) throw ArgumentError("cli-bench", "--images must be >= 1");
    const auto b = budget(base, patch, rows, cols);
    std::cout << "base,patch,rows,cols,h,w,per_image_uncompressed,per_image_compressed,ratio,images,"
                 "total_uncompressed,total_compressed\n";
    std::cout << b.base << ',' << b.patch << ',' << b.rows << ',' << b.cols << ',' << b.h << ',' << b.w << ','
              << b.per_image_uncompressed << ',' << b.per_image_compressed << ',' << b.ratio << ',' << images << ','
              << b.per_image_uncompressed * std::size_t(images) << ',' << b.per_image_compressed * std::size_t(images)
              << '\n';
    return 0;
}

/// Prefill FLOPs and wall-clock encode time per variant, crop count and base.
/// The "none" variant skips compression and feeds all (R*C+1)*h*w/4 reduced
/// tokens to the decoder.
int cmd_bench(const std::string& config, const std::string& variants, const std::string& crops,
              const std::string& bases, int reps, const std::string& out) {
    const auto run = load_run_config(config);
    std::ofstream file;
    if (!out.empty()) {
        file.open(out);
        if (!file) throw IoError("cli-bench", "cannot write " + out);
    }
    std::ostream& os = out.empty() ? std::cout : file;
    os << "variant,crops,base,tokens,flops,wall_ms\n";
    const auto instr = vocab::encode("Recognize texts in image 1.");
    for (const auto& v : split_list(variants)) {
        for (const auto& cs : split_list(crops)) {
            for (const auto& bs : split_list(bases)) {
                ModelConfig m = run.model;
                m.encoder.base = std::stoi(bs);
                const auto [r, c] = grid_for(std::stoi(cs));
                m.crop_rows = r;
                m.crop_cols = c;
                m.max_crops = std::max(m.max_crops, r * c);
                const bool none = v == "none";
                if (none) m.validate();
                else m = with_variant(m, v);
                const Model<float> model(m, run.seed);
                const RawImage page(r * m.encoder.base, c * m.encoder.base, 1, 1.0f);
                const auto b = budget(m.encoder.base, m.encoder.patch_size, r, c);
                const std::size_t tokens = none ? b.per_image_uncompressed : model.tokens_per_page();
                double best = 1e300;
                for (int k = 0; k < std::max(1, reps); ++k) {
                    NoGradGuard ng;
                    const auto t0 = std::chrono::steady_clock::now();
                    if (none) {
                        auto maps = model.encode_maps(page);
                        (void)maps;
                    } else {
                        auto enc = model.encode_page(page);
                        if (enc.tokens.extent(0) != tokens) throw ConsistencyError("cli-bench", "token count drift");
                    }
                    best = std::min(best, std::chrono::duration<double, std::milli>(
                                              std::chrono::steady_clock::now() - t0).count());
                }
                const double flops = count_prefill_flops(1 + tokens + instr.size(), m.decoder);
                os << v << ',' << r * c << ',' << m.encoder.base << ',' << tokens << ',' << fmt_double(flops) << ','
                   << best << '\n';
            }
        }
    }
    return 0;
}

int cmd_gen_corpus(const std::string& kind, std::size_t n, const std::string& pages, std::uint64_t seed,
                   const std::string& config, const std::string& out) {
    const auto run = load_run_config(config);
    const auto [lo, hi] = TrainPlan::parse_page_range(pages);
    const auto samples = gen_corpus(seed, parse_task_kind(kind), n, lo, hi, run.corpus.task);
    write_corpus(out, samples);
    std::cout << "samples,dir\n" << samples.size() << ',' << out << '\n';
    return 0;
}

int cmd_train(const std::string& plan_file, const std::string& config, std::uint64_t seed, bool seed_given,
              const std::string& out) {
    const auto plan_kv = KeyValueFile::load(plan_file);
    const auto plan = TrainPlan::from(plan_kv);
    auto run = config.empty() ? run_config_from(plan_kv) : load_run_config(config);
    if (seed_given) run.seed = seed;
    Model<float> model(run.model, run.seed);
    fs::create_directories(out);
    std::ofstream log(fs::path(out) / "train_log.csv");
    log << "stage,step,loss\n";
    train(model, plan, run.seed, run.corpus.task, [&](const StepRecord& r) {
        log << r.stage + 1 << ',' << r.step << ',' << r.loss << '\n';
        if (r.step % 100 == 0) std::cerr << "stage " << r.stage + 1 << " step " << r.step << " loss " << r.loss << "\n";
    });
    model.save(out);
    std::cout << "model,steps\n" << out << ',' << plan.stages.size() << '\n';
    return 0;
}

int cmd_eval(const std::string& model_dir, const std::string& corpus_dir, const std::string& out) {
    const auto model = Model<float>::load(model_dir);
    const auto corpus = read_corpus(corpus_dir);
    const auto m = evaluate(model, corpus);
    std::ofstream file;
    if (!out.empty()) file.open(out);
    std::ostream& os = out.empty() ? std::cout : file;
    os << "kind,pages,count,accuracy,chance\n";
    for (const auto& [key, cell] : m.cells) {
        const auto slash = key.find('/');
        const bool lookup = key.rfind("multipage_lookup", 0) == 0;
        os << key.substr(0, slash) << ',' << key.substr(slash + 1) << ',' << cell.count << ',' << cell.mean() << ','
           << (lookup ? std::to_string(m.lookup_chance.mean()) : std::string("")) << '\n';
    }
    return 0;
}

int cmd_ablate(const std::string& config, const std::string& variants, const std::string& seeds, std::size_t steps,
               double lr, const std::string& out) {
    const auto base = load_run_config(config);
    TrainStage stage;
    stage.steps = steps;
    stage.lr = lr;
    std::vector<AblationResult> all;
    for (const auto& s : split_list(seeds)) {
        std::vector<RunConfig> rows;
        for (const auto& v : split_list(variants)) {
            RunConfig r = base;
            r.seed = std::stoull(s);
            r.model = with_variant(base.model, v);
            rows.push_back(r);
        }
        auto res = run_ablation(rows, stage, [](const AblationResult& r) {
            std::cerr << r.variant << " seed " << r.seed << " accuracy " << r.accuracy << "\n";
        });
        all.insert(all.end(), res.begin(), res.end());
    }
    std::ofstream file;
    if (!out.empty()) file.open(out);
    write_ablation_csv(out.empty() ? std::cout : file, all);
    return 0;
}

int cmd_pipeline(const std::string& config, const std::string& model_dir, const std::vector<std::string>& images,
                 const std::string& out) {
    const auto run = load_run_config(config);
    const Model<float> model = model_dir.empty() ? Model<float>(run.model, run.seed) : Model<float>::load(model_dir);
    std::vector<fs::path> paths(images.begin(), images.end());
    for (const auto& r : run_pipeline(model, paths, out.empty() ? run.output_dir : out))
        std::cout << r.image << ',' << r.rows << ',' << r.cols << ',' << r.uncompressed << ',' << r.emitted << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Shape-adaptive cropping, visual token compression and toy multi-page decoding"};
    app.require_subcommand(1);

    std::string image, config, model_dir, out, maps, variant = "group_att", placement = "after_reducer";
    std::string kind = "single_parse", pages = "1", plan_file, corpus_dir;
    std::string variants = "none,group_att,complete_att,group_mean,resampler", crops = "1,4,9", bases = "28,56";
    std::string seeds = "1", abl_variants = "group_att,group_mean,resampler";
    std::vector<std::string> images;
    int max_crops = 12, base = 504, patch = 14, rows = 1, cols = 1, n_images = 1, layers = 0, reps = 3;
    std::size_t n = 10, steps = 2000;
    std::uint64_t seed = 1;
    double lr = 3e-3;

    auto* crop = app.add_subcommand("crop-plan", "Print the crop grid and rectangles of an image as CSV");
    crop->add_option("--image", image, "PNG or PPM file")->required();
    crop->add_option("--max-crops", max_crops, "Largest R*C");
    crop->add_option("--base", base, "Crop side in pixels");

    auto* enc = app.add_subcommand("encode", "Encode an image and write its global and tile feature maps");
    enc->add_option("--image", image)->required();
    enc->add_option("--config", config);
    enc->add_option("--model", model_dir, "Checkpoint directory");
    enc->add_option("--seed", seed);
    enc->add_option("--out", out)->required();

    auto* comp = app.add_subcommand("compress", "Compress feature maps written by encode");
    comp->add_option("--maps", maps)->required();
    comp->add_option("--variant", variant);
    comp->add_option("--placement", placement);
    comp->add_option("--layers", layers);
    comp->add_option("--config", config);
    comp->add_option("--model", model_dir);
    comp->add_option("--seed", seed);
    comp->add_option("--out", out)->required();

    auto* tok = app.add_subcommand("tokens", "Print the visual token budget as CSV");
    tok->add_option("--base", base)->required();
    tok->add_option("--patch", patch)->required();
    tok->add_option("--rows", rows)->required();
    tok->add_option("--cols", cols)->required();
    tok->add_option("--images", n_images);

    auto* bench = app.add_subcommand("bench", "Prefill FLOPs and encode time per variant as CSV");
    bench->add_option("--config", config);
    bench->add_option("--variants", variants, "Comma list; 'none' disables compression");
    bench->add_option("--crops", crops, "Comma list of crop counts");
    bench->add_option("--bases", bases, "Comma list of base resolutions");
    bench->add_option("--reps", reps, "Timing repetitions; the minimum is reported");
    bench->add_option("--out", out, "CSV file (default stdout)");

    auto* gen = app.add_subcommand("gen-corpus", "Write a synthetic task corpus");
    gen->add_option("--kind", kind);
    gen->add_option("--n", n);
    gen->add_option("--pages", pages, "P or A-B");
    gen->add_option("--seed", seed);
    gen->add_option("--config", config);
    gen->add_option("--out", out)->required();

    auto* tr = app.add_subcommand("train-toy", "Run a staged training plan and save a checkpoint");
    tr->add_option("--plan", plan_file)->required();
    tr->add_option("--config", config, "Model and corpus sections (default: the plan file)");
    auto* seed_opt = tr->add_option("--seed", seed);
    tr->add_option("--out", out)->required();

    auto* ev = app.add_subcommand("eval-toy", "Evaluate a checkpoint on a corpus directory");
    ev->add_option("--model", model_dir)->required();
    ev->add_option("--corpus", corpus_dir)->required();
    ev->add_option("--out", out, "CSV file (default stdout)");

    auto* abl = app.add_subcommand("ablate", "Train and compare compressor variants on a shared corpus");
    abl->add_option("--config", config);
    abl->add_option("--variants", abl_variants, "Comma list of VARIANT[:PLACEMENT]");
    abl->add_option("--seeds", seeds);
    abl->add_option("--steps", steps);
    abl->add_option("--lr", lr);
    abl->add_option("--out", out, "CSV file (default stdout)");

    auto* pipe = app.add_subcommand("pipeline", "Encode and compress images, writing tokens and a budget report");
    pipe->add_option("--config", config);
    pipe->add_option("--model", model_dir);
    pipe->add_option("--out", out);
    pipe->add_option("images", images)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*crop) return cmd_crop_plan(image, max_crops, base);
        if (*enc) return cmd_encode(image, config, model_dir, seed, out);
        if (*comp) return cmd_compress(maps, variant, placement, layers, config, model_dir, seed, out);
        if (*tok) return cmd_tokens(base, patch, rows, cols, n_images);
        if (*bench) return cmd_bench(config, variants, crops, bases, reps, out);
        if (*gen) return cmd_gen_corpus(kind, n, pages, seed, config, out);
        if (*tr) return cmd_train(plan_file, config, seed, seed_opt->count() > 0, out);
        if (*ev) return cmd_eval(model_dir, corpus_dir, out);
        if (*abl) return cmd_ablate(config, abl_variants, seeds, steps, lr, out);
        if (*pipe) return cmd_pipeline(config, model_dir, images, out);
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConsistencyError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
