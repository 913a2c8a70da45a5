// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doccomp/compressor.hpp"
#include "doccomp/encoder.hpp"
#include "doccomp/errors.hpp"
#include "doccomp/sequencer.hpp"
#include "doccomp/synthetic.hpp"

namespace doccomp {

/// Plain-text `key = value` file with `[section]` headers and `#` comments.
/// Keys are addressed as "section.key"; keys before any header have no prefix.
class KeyValueFile {
public:
    static KeyValueFile parse(std::istream& is, const std::string& origin = "<input>") {
        KeyValueFile f;
        std::string line, section;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw ConfigError("config", origin + ":" + std::to_string(lineno) + ": bad section header");
                section = trim(line.substr(1, line.size() - 2));
                f.sections_.push_back(section);
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("config", origin + ":" + std::to_string(lineno) + ": expected key = value");
            }
            const std::string key = (section.empty() ? "" : section + ".") + trim(line.substr(0, eq));
            if (f.values_.count(key)) throw ConfigError("config", origin + ": duplicate key " + key);
            f.values_[key] = trim(line.substr(eq + 1));
        }
        return f;
    }

    static KeyValueFile load(const std::filesystem::path& path) {
        std::ifstream is(path);
        if (!is) throw IoError("config", "cannot read " + path.string());
        return parse(is, path.string());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::vector<std::string>& sections() const { return sections_; }
    const std::map<std::string, std::string>& values() const { return values_; }

    std::string str(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    long long integer(const std::string& key, long long fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t used = 0;
            long long v = std::stoll(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config", key + ": expected an integer, got '" + it->second + "'");
        }
    }

    double real(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t used = 0;
            double v = std::stod(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config", key + ": expected a number, got '" + it->second + "'");
        }
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    }

    static std::vector<std::string> split(const std::string& s, char sep) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, sep))
            if (!trim(item).empty()) out.push_back(trim(item));
        return out;
    }

private:
    std::map<std::string, std::string> values_;
    std::vector<std::string> sections_;
};

/// Architecture of the full model: cropping, encoder, reducer, compressor, decoder.
struct ModelConfig {
    EncoderConfig encoder{.patch_size = 7, .depth = 0, .d_model = 32, .heads = 2, .base = 28};
    int d_hat = 64;
    int max_crops = 12;
    int crop_rows = 0;  // together with crop_cols: fixed grid; 0 means shape-adaptive
    int crop_cols = 0;
    CompressorSpec compressor;
    DecoderConfig decoder{.d_model = 64, .depth = 2, .heads = 4, .d_ff = 128, .vocab_size = int(vocab::kSize),
                          .max_seq = 192};

    /// Every geometric constraint, checked before any module is built.
    void validate() const {
        if (encoder.patch_size < 1 || encoder.base < 1 || encoder.base % encoder.patch_size != 0) {
            throw ConfigError("config", "model.base: " + std::to_string(encoder.base) +
                                            " is not a positive multiple of model.patch " +
                                            std::to_string(encoder.patch_size));
        }
        if (encoder.heads < 1 || encoder.d_model < 1 || encoder.d_model % encoder.heads != 0) {
            throw ConfigError("config", "model.encoder_heads: " + std::to_string(encoder.heads) +
                                            " does not divide model.encoder_dim " + std::to_string(encoder.d_model));
        }
        if (encoder.depth < 0) throw ConfigError("config", "model.encoder_depth must be >= 0");
        const int g = encoder.grid();
        if (g % 4 != 0) {
            throw ConfigError("config", "model.base: grid " + std::to_string(g) + " (base " +
                                            std::to_string(encoder.base) + " / patch " +
                                            std::to_string(encoder.patch_size) +
                                            ") must be divisible by 4 for the H-Reducer");
        }
        if (d_hat < 1) throw ConfigError("config", "model.d_hat must be positive");
        if (max_crops < 1 || max_crops > 12) throw ConfigError("config", "model.max_crops must be in 1..12");
        if ((crop_rows == 0) != (crop_cols == 0) || crop_rows < 0 || crop_cols < 0) {
            throw ConfigError("config", "model.crop_rows/crop_cols: set both or neither");
        }
        if (crop_rows * crop_cols > max_crops) throw ConfigError("config", "model.crop_rows: grid exceeds max_crops");
        try {
            compressor.validate();
        } catch (const ConfigError& e) {
            const std::string what = e.what();
            throw ConfigError("config", "compressor." + what.substr(what.find("] ") + 2));
        }
        const int comp_dim = compressor.placement == Placement::AfterVit ? encoder.d_model : d_hat;
        if (comp_dim % compressor.heads != 0) {
            throw ConfigError("config", "compressor.heads: " + std::to_string(compressor.heads) +
                                            " does not divide the compressor width " + std::to_string(comp_dim));
        }
        try {
            decoder.validate();
        } catch (const ConfigError& e) {
            const std::string what = e.what();
            throw ConfigError("config", "decoder." + what.substr(what.find("] ") + 2));
        }
        if (decoder.d_model != d_hat) {
            throw ConfigError("config", "decoder.d_model: must equal model.d_hat (" + std::to_string(d_hat) + ")");
        }
    }
};

/// Synthetic corpus description shared by training and evaluation.
struct CorpusConfig {
    TaskOptions task;
    std::size_t train_samples = 2000;
    std::size_t eval_samples = 500;

    bool operator==(const CorpusConfig&) const = default;
};

struct RunConfig {
    ModelConfig model;
    CorpusConfig corpus;
    std::uint64_t seed = 1;
    std::string output_dir = "out";
};

/// Applies the [model], [compressor], [decoder], [corpus] and [run] sections.
inline RunConfig run_config_from(const KeyValueFile& f) {
    RunConfig c;
    auto& m = c.model;
    m.encoder.base = int(f.integer("model.base", m.encoder.base));
    m.encoder.patch_size = int(f.integer("model.patch", m.encoder.patch_size));
    m.encoder.depth = int(f.integer("model.encoder_depth", m.encoder.depth));
    m.encoder.d_model = int(f.integer("model.encoder_dim", m.encoder.d_model));
    m.encoder.heads = int(f.integer("model.encoder_heads", m.encoder.heads));
    m.d_hat = int(f.integer("model.d_hat", m.d_hat));
    m.max_crops = int(f.integer("model.max_crops", m.max_crops));
    m.crop_rows = int(f.integer("model.crop_rows", m.crop_rows));
    m.crop_cols = int(f.integer("model.crop_cols", m.crop_cols));
    m.compressor.kind = parse_compressor_kind(f.str("compressor.variant", to_string(m.compressor.kind)));
    m.compressor.placement = parse_placement(f.str("compressor.placement", to_string(m.compressor.placement)));
    m.compressor.layers = int(f.integer("compressor.layers", m.compressor.layers));
    m.compressor.heads = int(f.integer("compressor.heads", m.compressor.heads));
    m.compressor.query_count = int(f.integer("compressor.query_count", m.compressor.query_count));
    m.decoder.d_model = int(f.integer("decoder.d_model", m.d_hat));
    m.decoder.depth = int(f.integer("decoder.depth", m.decoder.depth));
    m.decoder.heads = int(f.integer("decoder.heads", m.decoder.heads));
    m.decoder.d_ff = int(f.integer("decoder.d_ff", m.decoder.d_ff));
    m.decoder.max_seq = int(f.integer("decoder.max_seq", m.decoder.max_seq));
    {
        const auto pos = f.str("decoder.position", m.decoder.rotary ? "rotary" : "learned");
        if (pos != "rotary" && pos != "learned") {
            throw ConfigError("config", "decoder.position: expected rotary or learned, got '" + pos + "'");
        }
        m.decoder.rotary = pos == "rotary";
    }
    auto& p = c.corpus.task.page;
    p.height = int(f.integer("corpus.page_height", p.height));
    p.width = int(f.integer("corpus.page_width", p.width));
    p.glyph_rows = int(f.integer("corpus.glyph_rows", p.glyph_rows));
    p.glyph_cols = int(f.integer("corpus.glyph_cols", p.glyph_cols));
    p.alphabet = f.str("corpus.alphabet", p.alphabet);
    c.corpus.task.max_pages = int(f.integer("corpus.max_pages", c.corpus.task.max_pages));
    c.corpus.train_samples = std::size_t(f.integer("corpus.train_samples", long(c.corpus.train_samples)));
    c.corpus.eval_samples = std::size_t(f.integer("corpus.eval_samples", long(c.corpus.eval_samples)));
    c.seed = std::uint64_t(f.integer("run.seed", long(c.seed)));
    c.output_dir = f.str("run.out", c.output_dir);
    if (const char* env = std::getenv("DTC_SEED")) {
        try {
            c.seed = std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError("config", std::string("DTC_SEED: expected an integer, got '") + env + "'");
        }
    }
    c.model.validate();
    c.corpus.task.page.validate();
    return c;
}

/// Inverse of run_config_from for the model part, used for checkpoints.
inline std::string model_config_text(const ModelConfig& m) {
    std::ostringstream os;
    os << "[model]\n"
       << "base = " << m.encoder.base << "\npatch = " << m.encoder.patch_size
       << "\nencoder_depth = " << m.encoder.depth << "\nencoder_dim = " << m.encoder.d_model
       << "\nencoder_heads = " << m.encoder.heads << "\nd_hat = " << m.d_hat << "\nmax_crops = " << m.max_crops
       << "\ncrop_rows = " << m.crop_rows << "\ncrop_cols = " << m.crop_cols << "\n\n[compressor]\n"
       << "variant = " << to_string(m.compressor.kind) << "\nplacement = " << to_string(m.compressor.placement)
       << "\nlayers = " << m.compressor.layers << "\nheads = " << m.compressor.heads
       << "\nquery_count = " << m.compressor.query_count << "\n\n[decoder]\n"
       << "d_model = " << m.decoder.d_model << "\ndepth = " << m.decoder.depth << "\nheads = " << m.decoder.heads
       << "\nd_ff = " << m.decoder.d_ff << "\nmax_seq = " << m.decoder.max_seq
       << "\nposition = " << (m.decoder.rotary ? "rotary" : "learned") << "\n";
    return os.str();
}

}  // namespace doccomp
