// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "doccomp/errors.hpp"
#include "doccomp/image.hpp"
#include "doccomp/rng.hpp"

namespace doccomp {

namespace font {

constexpr int kGlyphW = 5;
constexpr int kGlyphH = 7;

// One byte per glyph row, bit 4 = leftmost pixel.
struct Glyph {
    char ch;
    std::array<std::uint8_t, kGlyphH> rows;
};

// clang-format off
inline constexpr std::array<Glyph, 36> kGlyphs = {{
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
    {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
    {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
    {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
    {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}},
    {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
}};
// clang-format on

inline const Glyph& glyph(char c) {
    for (const auto& g : kGlyphs)
        if (g.ch == c) return g;
    throw ArgumentError("synthetic-docs", std::string("no glyph for character '") + c + "'");
}

inline const std::string& default_alphabet() {
    static const std::string a = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    return a;
}

}  // namespace font

/// Page raster and glyph grid. Each cell holds one glyph on a white
/// background with black ink, at the top of the cell with a 1-pixel left
/// margin; a cell is at least 7x7 so the 5x7 bitmap keeps 1-pixel margins on
/// both sides. The default 4x2 grid of 14x28 cells puts each glyph inside a
/// single 7-pixel patch of a 2x2 crop and one glyph in each reduced tile cell.
struct PageSpec {
    int height = 56;
    int width = 56;
    int glyph_rows = 4;
    int glyph_cols = 2;
    std::string alphabet = font::default_alphabet();

    int cell_h() const { return height / glyph_rows; }
    int cell_w() const { return width / glyph_cols; }

    /// Top-left corner of the glyph bitmap inside its cell.
    int glyph_top() const { return 0; }
    int glyph_left() const { return 1; }

    void validate() const {
        if (alphabet.empty()) throw ConfigError("synthetic-docs", "alphabet must be nonempty");
        if (glyph_rows < 1 || glyph_cols < 1) throw ConfigError("synthetic-docs", "glyph grid must be nonempty");
        if (cell_h() < font::kGlyphH || cell_w() < font::kGlyphW + 2) {
            throw ConfigError("synthetic-docs", "glyph grid " + std::to_string(glyph_rows) + "x" +
                                                    std::to_string(glyph_cols) + " is too dense for a " +
                                                    std::to_string(height) + "x" + std::to_string(width) +
                                                    " page (cells must be at least 7x7)");
        }
        for (char c : alphabet) font::glyph(c);
    }

    bool operator==(const PageSpec&) const = default;
};

struct GlyphCell {
    int row = 0;
    int col = 0;
    int top = 0;   // glyph bitmap origin in pixels
    int left = 0;
};

struct SyntheticPage {
    RawImage image;
    std::string text;               // row-major, one character per cell
    std::vector<GlyphCell> layout;  // same order as text
    int page_id = 0;
};

inline void draw_glyph(RawImage& img, char c, int top, int left) {
    const auto& g = font::glyph(c);
    for (int y = 0; y < font::kGlyphH; ++y)
        for (int x = 0; x < font::kGlyphW; ++x)
            if (g.rows[y] >> (font::kGlyphW - 1 - x) & 1) img.at(top + y, left + x) = 0.0f;
}

inline SyntheticPage render_page(const std::string& text, const PageSpec& spec, int page_id = 0) {
    spec.validate();
    if (text.size() != std::size_t(spec.glyph_rows) * spec.glyph_cols) {
        throw ArgumentError("synthetic-docs", "text length " + std::to_string(text.size()) + " does not fill the grid");
    }
    SyntheticPage page;
    page.image = RawImage(spec.height, spec.width, 1, 1.0f);
    page.text = text;
    page.page_id = page_id;
    for (int r = 0; r < spec.glyph_rows; ++r) {
        for (int c = 0; c < spec.glyph_cols; ++c) {
            GlyphCell cell{r, c, r * spec.cell_h() + spec.glyph_top(), c * spec.cell_w() + spec.glyph_left()};
            draw_glyph(page.image, text[std::size_t(r) * spec.glyph_cols + c], cell.top, cell.left);
            page.layout.push_back(cell);
        }
    }
    return page;
}

inline SyntheticPage gen_page(std::uint64_t seed, const PageSpec& spec, int page_id = 0) {
    spec.validate();
    Rng rng(mix_seed(seed, 0x9a6e));
    std::string text;
    for (int i = 0; i < spec.glyph_rows * spec.glyph_cols; ++i) text += spec.alphabet[rng.below(spec.alphabet.size())];
    return render_page(text, spec, page_id);
}

inline SyntheticPage gen_page(std::uint64_t seed, int glyph_rows, int glyph_cols, const std::string& alphabet,
                              int height = 56, int width = 56) {
    return gen_page(seed, PageSpec{height, width, glyph_rows, glyph_cols, alphabet});
}

enum class TaskKind { SingleParse, MultipageParse, MultipageLookup };

inline std::string to_string(TaskKind k) {
    switch (k) {
        case TaskKind::SingleParse: return "single_parse";
        case TaskKind::MultipageParse: return "multipage_parse";
        case TaskKind::MultipageLookup: return "multipage_lookup";
    }
    return "?";
}

inline TaskKind parse_task_kind(const std::string& s) {
    for (auto k : {TaskKind::SingleParse, TaskKind::MultipageParse, TaskKind::MultipageLookup})
        if (to_string(k) == s) return k;
    throw ConfigError("synthetic-docs", "kind: unknown task kind '" + s + "'");
}

struct TaskOptions {
    PageSpec page;
    int max_pages = 12;
    bool allow_collisions = false;  // negative testing: copy a quotable row across pages
    std::string parse_separator = " ";

    bool operator==(const TaskOptions&) const = default;
};

struct TaskSample {
    TaskKind kind = TaskKind::SingleParse;
    std::vector<SyntheticPage> pages;
    std::string instruction;
    std::string target;
    std::vector<int> cited;  // 1-based ordinals named by the instruction (parse) or target (lookup)
};

/// Row r of a page's text: the quotable unit for lookup tasks.
inline std::string text_row(const SyntheticPage& p, const PageSpec& spec, int r) {
    return p.text.substr(std::size_t(r) * spec.glyph_cols, std::size_t(spec.glyph_cols));
}

inline std::string ordinal_phrase(const std::vector<int>& ordinals) {
    std::string s;
    for (std::size_t i = 0; i < ordinals.size(); ++i) {
        if (i) s += " and ";
        s += "image " + std::to_string(ordinals[i]);
    }
    return s;
}

/// Builds one task sample.
///
/// single_parse: "Recognize texts in image 1." with the page text as target.
/// multipage_parse: names one or two pages; the target joins their texts.
/// multipage_lookup: quotes one glyph row from one or two pages inside
/// <doc>..</doc>; the target names every page containing each quote.
/// Without collisions, no row of one page occurs anywhere in another page.
inline TaskSample gen_task(std::uint64_t seed, TaskKind kind, int n_pages, const TaskOptions& opt = {}) {
    opt.page.validate();
    if (kind == TaskKind::SingleParse) n_pages = 1;
    if (n_pages < 1) throw ConfigError("synthetic-docs", "pages: n_pages must be >= 1");
    if (n_pages > opt.max_pages) {
        throw ConfigError("synthetic-docs", "pages: " + std::to_string(n_pages) + " exceeds the maximum of " +
                                                std::to_string(opt.max_pages));
    }
    Rng rng(mix_seed(seed, 0x7a5c));
    TaskSample s;
    s.kind = kind;
    const PageSpec& spec = opt.page;

    auto clashes = [&](const std::string& text) {
        for (const auto& p : s.pages) {
            for (int r = 0; r < spec.glyph_rows; ++r) {
                const std::string mine = text.substr(std::size_t(r) * spec.glyph_cols, spec.glyph_cols);
                if (p.text.find(mine) != std::string::npos) return true;
                if (text.find(text_row(p, spec, r)) != std::string::npos) return true;
            }
        }
        return false;
    };
    for (int k = 0; k < n_pages; ++k) {
        for (std::uint64_t attempt = 0;; ++attempt) {
            auto page = gen_page(mix_seed(rng.next_u64(), attempt), spec, k + 1);
            if (opt.allow_collisions || !clashes(page.text)) {
                s.pages.push_back(std::move(page));
                break;
            }
            if (attempt > 1000) throw ConfigError("synthetic-docs", "alphabet too small for collision-free pages");
        }
    }
    if (opt.allow_collisions && n_pages > 1) {
        // Copy row 0 of page 1 into a random later page.
        auto& dst = s.pages[1 + rng.below(std::size_t(n_pages - 1))];
        const std::string row = text_row(s.pages[0], spec, 0);
        std::string text = dst.text;
        text.replace(0, row.size(), row);
        dst = render_page(text, spec, dst.page_id);
    }

    switch (kind) {
        case TaskKind::SingleParse:
            s.instruction = "Recognize texts in image 1.";
            s.target = s.pages[0].text;
            s.cited = {1};
            break;
        case TaskKind::MultipageParse: {
            const int a = 1 + int(rng.below(std::size_t(n_pages)));
            s.cited = {a};
            if (n_pages > 1 && rng.below(2)) {
                int b = 1 + int(rng.below(std::size_t(n_pages - 1)));
                if (b >= a) ++b;
                s.cited = {std::min(a, b), std::max(a, b)};
            }
            s.instruction = "Recognize texts in " + ordinal_phrase(s.cited) + ".";
            for (std::size_t i = 0; i < s.cited.size(); ++i) {
                if (i) s.target += opt.parse_separator;
                s.target += s.pages[std::size_t(s.cited[i] - 1)].text;
            }
            break;
        }
        case TaskKind::MultipageLookup: {
            std::vector<int> sources{1 + int(rng.below(std::size_t(n_pages)))};
            if (n_pages > 1 && rng.below(2)) {
                int b = 1 + int(rng.below(std::size_t(n_pages - 1)));
                if (b >= sources[0]) ++b;
                sources.push_back(b);
            }
            s.instruction = "Looking for the image with text";
            for (std::size_t i = 0; i < sources.size(); ++i) {
                const auto& page = s.pages[std::size_t(sources[i] - 1)];
                const std::string quote = text_row(page, spec, int(rng.below(std::size_t(spec.glyph_rows))));
                s.instruction += (i ? " and <doc>" : " <doc>") + quote + "</doc>";
                for (int k = 1; k <= n_pages; ++k)
                    if (s.pages[std::size_t(k - 1)].text.find(quote) != std::string::npos &&
                        std::find(s.cited.begin(), s.cited.end(), k) == s.cited.end())
                        s.cited.push_back(k);
            }
            s.instruction += ".";
            s.target = ordinal_phrase(s.cited);
            break;
        }
    }
    return s;
}

/// Page count for sample i of a corpus spanning [min_pages, max_pages].
inline int corpus_pages(std::uint64_t seed, std::size_t i, int min_pages, int max_pages) {
    Rng rng(mix_seed(seed, 0xc0de + i));
    return min_pages + int(rng.below(std::size_t(max_pages - min_pages + 1)));
}

inline std::vector<TaskSample> gen_corpus(std::uint64_t seed, TaskKind kind, std::size_t n, int min_pages,
                                          int max_pages, const TaskOptions& opt = {}) {
    if (min_pages < 1 || max_pages < min_pages) throw ConfigError("synthetic-docs", "pages: invalid page range");
    std::vector<TaskSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(gen_task(mix_seed(seed, i), kind, corpus_pages(seed, i, min_pages, max_pages), opt));
    return out;
}

/// Writes DIR/sample_NNNNN/{page_KK.ppm, manifest.txt}.
inline void write_corpus(const std::filesystem::path& dir, const std::vector<TaskSample>& samples) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%05zu", i);
        const auto sdir = dir / name;
        std::filesystem::create_directories(sdir);
        const auto& s = samples[i];
        std::ofstream man(sdir / "manifest.txt");
        if (!man) throw IoError("synthetic-docs", "cannot write " + (sdir / "manifest.txt").string());
        man << "kind = " << to_string(s.kind) << "\n";
        man << "instruction = " << s.instruction << "\n";
        man << "target = " << s.target << "\n";
        man << "pages = ";
        for (std::size_t k = 0; k < s.pages.size(); ++k) {
            char page[32];
            std::snprintf(page, sizeof(page), "page_%02zu.ppm", k + 1);
            write_pnm(sdir / page, to_rgb(s.pages[k].image));
            man << (k ? "," : "") << page;
        }
        man << "\n";
        for (std::size_t k = 0; k < s.pages.size(); ++k) man << "text." << k + 1 << " = " << s.pages[k].text << "\n";
        man << "cited = ";
        for (std::size_t k = 0; k < s.cited.size(); ++k) man << (k ? "," : "") << s.cited[k];
        man << "\n";
    }
}

/// Reads a corpus written by write_corpus. Page images come back as 3-channel
/// rasters; glyph layouts are not stored.
inline std::vector<TaskSample> read_corpus(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("synthetic-docs", "no corpus at " + dir.string());
    std::vector<std::filesystem::path> sample_dirs;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_directory() && e.path().filename().string().rfind("sample_", 0) == 0) sample_dirs.push_back(e.path());
    std::sort(sample_dirs.begin(), sample_dirs.end());
    std::vector<TaskSample> out;
    for (const auto& sdir : sample_dirs) {
        std::ifstream man(sdir / "manifest.txt");
        if (!man) throw IoError("synthetic-docs", "missing manifest in " + sdir.string());
        std::map<std::string, std::string> kv;
        std::string line;
        while (std::getline(man, line)) {
            const auto eq = line.find(" = ");
            if (eq == std::string::npos) continue;
            kv[line.substr(0, eq)] = line.substr(eq + 3);
        }
        TaskSample s;
        s.kind = parse_task_kind(kv["kind"]);
        s.instruction = kv["instruction"];
        s.target = kv["target"];
        std::string pages = kv["pages"];
        std::size_t k = 0, pos = 0;
        while (pos <= pages.size() && !pages.empty()) {
            const auto comma = pages.find(',', pos);
            const std::string file = pages.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            SyntheticPage p;
            p.image = read_image(sdir / file);
            p.text = kv["text." + std::to_string(++k)];
            p.page_id = int(k);
            s.pages.push_back(std::move(p));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        const std::string cited = kv["cited"];
        for (std::size_t a = 0; a < cited.size();) {
            const auto comma = cited.find(',', a);
            s.cited.push_back(std::stoi(cited.substr(a, comma - a)));
            if (comma == std::string::npos) break;
            a = comma + 1;
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace doccomp
