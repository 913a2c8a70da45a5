// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <set>

#include "doccomp/synthetic.hpp"

using namespace doccomp;

namespace {

// Reads a page back cell by cell: a cell decodes to character c when its
// pixels equal c's bitmap drawn at some offset inside the cell and white
// elsewhere. Returns '?' when no character or more than one matches.
std::string ocr(const RawImage& img, const PageSpec& spec) {
    const int ch = spec.height / spec.glyph_rows, cw = spec.width / spec.glyph_cols;
    std::string out;
    for (int r = 0; r < spec.glyph_rows; ++r) {
        for (int c = 0; c < spec.glyph_cols; ++c) {
            std::set<char> hits;
            for (char a : spec.alphabet) {
                const auto& g = font::glyph(a);
                for (int oy = 0; oy + font::kGlyphH <= ch; ++oy) {
                    for (int ox = 0; ox + font::kGlyphW <= cw; ++ox) {
                        bool same = true;
                        for (int y = 0; y < ch && same; ++y) {
                            for (int x = 0; x < cw && same; ++x) {
                                const int gy = y - oy, gx = x - ox;
                                const bool ink = gy >= 0 && gy < font::kGlyphH && gx >= 0 && gx < font::kGlyphW &&
                                                 (g.rows[gy] >> (font::kGlyphW - 1 - gx) & 1);
                                same = img.at(r * ch + y, c * cw + x) == (ink ? 0.0f : 1.0f);
                            }
                        }
                        if (same) hits.insert(a);
                    }
                }
            }
            out += hits.size() == 1 ? *hits.begin() : '?';
        }
    }
    return out;
}

}  // namespace

TEST_CASE("every glyph is distinct and inked") {
    std::set<std::array<std::uint8_t, font::kGlyphH>> seen;
    for (char c : font::default_alphabet()) {
        const auto& g = font::glyph(c);
        int ink = 0;
        for (auto row : g.rows) {
            REQUIRE(row < (1 << font::kGlyphW));
            ink += __builtin_popcount(row);
        }
        REQUIRE(ink > 0);
        REQUIRE(seen.insert(g.rows).second);
    }
    REQUIRE_THROWS_AS(font::glyph('a'), ArgumentError);
}

TEST_CASE("rendering is lossless under a cell-by-cell reader") {
    for (auto [rows, cols] : {std::pair{4, 2}, std::pair{4, 4}, std::pair{8, 8}, std::pair{2, 3}}) {
        PageSpec spec{56, 56, rows, cols, font::default_alphabet()};
        for (std::uint64_t seed = 1; seed <= 25; ++seed) {
            auto p = gen_page(seed, spec);
            REQUIRE(p.text.size() == std::size_t(rows * cols));
            REQUIRE(ocr(p.image, spec) == p.text);
            REQUIRE(p.layout.size() == p.text.size());
            for (std::size_t i = 0; i < p.layout.size(); ++i) {
                REQUIRE(p.layout[i].row == int(i) / cols);
                REQUIRE(p.layout[i].col == int(i) % cols);
            }
        }
    }
}

TEST_CASE("glyphs keep a one pixel margin to their horizontal neighbours") {
    PageSpec spec{56, 56, 8, 8, font::default_alphabet()};  // densest 7x7 cells
    auto p = render_page(std::string(64, 'M'), spec);
    for (int y = 0; y < 56; ++y)
        for (int c = 0; c < 8; ++c) {
            REQUIRE(p.image.at(y, c * 7) == 1.0f);
            REQUIRE(p.image.at(y, c * 7 + 6) == 1.0f);
        }
}

TEST_CASE("page generation is deterministic and validates its grid") {
    PageSpec spec;
    REQUIRE(gen_page(7, spec).image == gen_page(7, spec).image);
    REQUIRE(gen_page(7, spec).text != gen_page(8, spec).text);
    REQUIRE(gen_page(3, 4, 2, "A").text == "AAAAAAAA");
    REQUIRE_THROWS_AS(gen_page(1, 9, 2, "AB"), ConfigError);
    REQUIRE_THROWS_AS(gen_page(1, 4, 9, "AB"), ConfigError);
    REQUIRE_THROWS_AS(gen_page(1, 4, 2, ""), ConfigError);
    REQUIRE_THROWS_AS(gen_page(1, 4, 2, "a"), ArgumentError);
    REQUIRE_THROWS_AS(render_page("ABC", spec), ArgumentError);
}

TEST_CASE("task templates") {
    TaskOptions opt;
    SECTION("single parse") {
        auto s = gen_task(1, TaskKind::SingleParse, 5, opt);
        REQUIRE(s.pages.size() == 1);
        REQUIRE(s.instruction == "Recognize texts in image 1.");
        REQUIRE(s.target == s.pages[0].text);
    }
    SECTION("multi-page parse names one or two existing pages") {
        std::set<std::size_t> counts;
        for (std::uint64_t seed = 1; seed <= 200; ++seed) {
            auto s = gen_task(seed, TaskKind::MultipageParse, 2 + int(seed % 9), opt);
            REQUIRE((s.cited.size() == 1 || s.cited.size() == 2));
            counts.insert(s.cited.size());
            std::string want = "Recognize texts in " + ordinal_phrase(s.cited) + ".";
            REQUIRE(s.instruction == want);
            std::string target;
            for (std::size_t i = 0; i < s.cited.size(); ++i) {
                REQUIRE(s.cited[i] >= 1);
                REQUIRE(s.cited[i] <= int(s.pages.size()));
                if (i) target += " ";
                target += s.pages[std::size_t(s.cited[i] - 1)].text;
            }
            REQUIRE(s.target == target);
        }
        REQUIRE(counts.size() == 2);
    }
    SECTION("lookup cites exactly the pages containing each quote") {
        for (std::uint64_t seed = 1; seed <= 200; ++seed) {
            const int n = 2 + int(seed % 9);
            auto s = gen_task(seed, TaskKind::MultipageLookup, n, opt);
            REQUIRE(s.instruction.rfind("Looking for the image with text <doc>", 0) == 0);
            std::vector<std::string> quotes;
            for (std::size_t at = 0; (at = s.instruction.find("<doc>", at)) != std::string::npos;) {
                const auto end = s.instruction.find("</doc>", at);
                quotes.push_back(s.instruction.substr(at + 5, end - at - 5));
                at = end;
            }
            REQUIRE((quotes.size() == 1 || quotes.size() == 2));
            std::vector<int> want;
            for (const auto& q : quotes)
                for (int k = 1; k <= n; ++k)
                    if (s.pages[std::size_t(k - 1)].text.find(q) != std::string::npos &&
                        std::find(want.begin(), want.end(), k) == want.end())
                        want.push_back(k);
            REQUIRE(s.cited == want);
            REQUIRE(s.cited.size() == quotes.size());  // distinct pages: one source per quote
            REQUIRE(s.target == ordinal_phrase(want));
        }
    }
    SECTION("collision mode makes a quote ambiguous") {
        TaskOptions col = opt;
        col.allow_collisions = true;
        int shared = 0;
        for (std::uint64_t seed = 1; seed <= 50; ++seed) {
            auto s = gen_task(seed, TaskKind::MultipageLookup, 4, col);
            const auto row = text_row(s.pages[0], col.page, 0);
            int holders = 0;
            for (const auto& p : s.pages) holders += p.text.find(row) != std::string::npos;
            shared += holders >= 2;
        }
        REQUIRE(shared == 50);
    }
    REQUIRE(ordinal_phrase({3, 7}) == "image 3 and image 7");
    REQUIRE_THROWS_AS(gen_task(1, TaskKind::MultipageParse, 13, opt), ConfigError);
    REQUIRE_THROWS_AS(gen_task(1, TaskKind::MultipageParse, 0, opt), ConfigError);
}

TEST_CASE("corpora are seed-deterministic and survive a disk round trip") {
    TaskOptions opt;
    auto a = gen_corpus(11, TaskKind::MultipageLookup, 6, 2, 5, opt);
    auto b = gen_corpus(11, TaskKind::MultipageLookup, 6, 2, 5, opt);
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].instruction == b[i].instruction);
        REQUIRE(a[i].target == b[i].target);
        REQUIRE(a[i].pages.size() >= 2);
        REQUIRE(a[i].pages.size() <= 5);
        for (std::size_t k = 0; k < a[i].pages.size(); ++k) REQUIRE(a[i].pages[k].image == b[i].pages[k].image);
    }
    const auto dir = std::filesystem::temp_directory_path() / "doccomp_corpus_test";
    std::filesystem::remove_all(dir);
    write_corpus(dir, a);
    auto back = read_corpus(dir);
    REQUIRE(back.size() == a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(back[i].kind == a[i].kind);
        REQUIRE(back[i].instruction == a[i].instruction);
        REQUIRE(back[i].target == a[i].target);
        REQUIRE(back[i].cited == a[i].cited);
        REQUIRE(back[i].pages.size() == a[i].pages.size());
        for (std::size_t k = 0; k < a[i].pages.size(); ++k) {
            REQUIRE(back[i].pages[k].text == a[i].pages[k].text);
            REQUIRE(back[i].pages[k].image == to_rgb(a[i].pages[k].image));
        }
    }
    std::filesystem::remove_all(dir);
    REQUIRE_THROWS_AS(read_corpus(dir), IoError);
    REQUIRE_THROWS_AS(gen_corpus(1, TaskKind::SingleParse, 1, 3, 2, opt), ConfigError);
}
