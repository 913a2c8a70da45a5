// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <filesystem>

#include "doccomp/cropper.hpp"
#include "doccomp/image.hpp"
#include "doccomp/rng.hpp"

using namespace doccomp;

namespace {

// Independent scorer: enumerate, score with the same rule written out in full,
// keep the best with ties to fewer crops then fewer rows.
std::pair<int, int> brute_force_grid(long H, long W, int max_crops, int base) {
    const double tile = double(base) * base;
    double area = double(H) * double(W);
    if (area < tile) area = tile;
    if (area > tile * max_crops) area = tile * max_crops;
    std::pair<int, int> best{0, 0};
    double best_s = -1;
    for (int n = 1; n <= max_crops; ++n) {
        for (int r = 1; r <= n; ++r) {
            if (n % r) continue;
            const int c = n / r;
            const double a = double(W) / double(H), g = double(c) / double(r);
            const double shape = a < g ? a / g : g / a;
            const double canvas = tile * n;
            const double res = area < canvas ? area / canvas : canvas / area;
            const double s = shape + res;
            if (s > best_s) {  // ascending n then r, so strict '>' keeps the tie-break
                best_s = s;
                best = {r, c};
            }
        }
    }
    return best;
}

RawImage gradient_image(int h, int w, int channels = 3) {
    RawImage img(h, w, channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) img.at(y, x, c) = float((x * 3 + y * 5 + c * 7) % 256) / 255.0f;
    return img;
}

}  // namespace

TEST_CASE("plan_crops examples") {
    auto p = plan_crops(RawImage(504, 504, 3), 12, 504);
    REQUIRE(p.rows == 1);
    REQUIRE(p.cols == 1);

    auto q = plan_crops(RawImage(1008, 2016, 1), 12, 504);
    auto bf = brute_force_grid(1008, 2016, 12, 504);
    REQUIRE(std::pair{q.rows, q.cols} == bf);

    auto strip = plan_crops(RawImage(10000, 100, 1), 12, 504);
    REQUIRE(strip.rows > strip.cols);
    REQUIRE(strip.crops() <= 12);

    auto big = plan_crops(RawImage(1344, 1344, 1), 9, 448);
    REQUIRE(big.rows == 3);
    REQUIRE(big.cols == 3);

    REQUIRE_THROWS_AS(plan_crops(RawImage(10, 10, 1), 0, 504), ConfigError);
}

TEST_CASE("plan_crops matches the brute-force oracle on random shapes") {
    Rng rng(17);
    for (int i = 0; i < 400; ++i) {
        const int h = int(rng.range(20, 3000)), w = int(rng.range(20, 3000));
        const int m = int(rng.range(1, 13));
        const int base = rng.below(2) ? 504 : 448;
        auto plan = plan_crops(RawImage(h, w, 1), m, base);
        INFO(h << "x" << w << " max " << m);
        REQUIRE(std::pair{plan.rows, plan.cols} == brute_force_grid(h, w, m, base));
        REQUIRE(plan.crops() <= m);
    }
}

TEST_CASE("plan rectangles partition the canvas") {
    for (auto [h, w] : {std::pair{1008, 2016}, {3000, 400}, {700, 700}, {90, 5000}}) {
        auto plan = plan_crops(RawImage(h, w, 1), 12, 56);
        std::vector<int> cover(std::size_t(plan.canvas_height()) * plan.canvas_width(), 0);
        for (const auto& s : plan.sub_rects)
            for (int y = s.rect.top; y < s.rect.top + s.rect.height; ++y)
                for (int x = s.rect.left; x < s.rect.left + s.rect.width; ++x) ++cover[std::size_t(y) * plan.canvas_width() + x];
        for (int c : cover) REQUIRE(c == 1);
    }
}

TEST_CASE("plans are deterministic and scale invariant within a size class") {
    // Both too large for the biggest canvas: same aspect ratio, same plan.
    auto a = plan_crops(RawImage(4000, 2000, 1), 12, 504);
    auto b = plan_crops(RawImage(8000, 4000, 1), 12, 504);
    REQUIRE(std::pair{a.rows, a.cols} == std::pair{b.rows, b.cols});
    // Both smaller than a single tile.
    auto c = plan_crops(RawImage(100, 300, 1), 12, 504);
    auto d = plan_crops(RawImage(50, 150, 1), 12, 504);
    REQUIRE(std::pair{c.rows, c.cols} == std::pair{d.rows, d.cols});
    auto e = plan_crops(RawImage(100, 300, 1), 12, 504);
    REQUIRE(std::pair{c.rows, c.cols} == std::pair{e.rows, e.cols});
}

TEST_CASE("slice_image tiles reassemble the canvas") {
    auto img = gradient_image(1008, 1008);
    auto plan = fixed_plan(img, 2, 2, 504);
    auto s = slice_image(img, plan);
    REQUIRE(s.subs.size() == 4);
    REQUIRE(s.global.height == 504);
    REQUIRE(s.global.width == 504);
    // 1008 -> 1008 canvas is an exact copy, so tiles are exact quadrants.
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) REQUIRE(s.sub(r, c) == crop(img, r * 504, c * 504, 504, 504));
}

TEST_CASE("slice_image checks plan consistency") {
    auto img = gradient_image(100, 200);
    auto plan = plan_crops(img, 4, 56);
    REQUIRE_THROWS_AS(slice_image(gradient_image(100, 201), plan), ConsistencyError);
    plan.sub_rects.pop_back();
    REQUIRE_THROWS_AS(slice_image(img, plan), ConsistencyError);
}

TEST_CASE("bilinear resize is corner aligned") {
    RawImage img(2, 2, 1);
    img.pixels = {0.0f, 1.0f, 2.0f, 3.0f};
    auto r = resize_bilinear(img, 3, 3);
    REQUIRE(r.at(0, 0) == 0.0f);
    REQUIRE(r.at(0, 2) == 1.0f);
    REQUIRE(r.at(2, 0) == 2.0f);
    REQUIRE(r.at(2, 2) == 3.0f);
    REQUIRE(r.at(1, 1) == Catch::Approx(1.5f));
}

TEST_CASE("image IO round trips") {
    auto dir = std::filesystem::temp_directory_path() / "doccomp_test_cropper";
    std::filesystem::create_directories(dir);
    auto rgb = gradient_image(13, 17, 3);
    write_pnm(dir / "a.ppm", rgb);
    REQUIRE(read_image(dir / "a.ppm") == rgb);
    write_png(dir / "a.png", rgb);
    REQUIRE(read_image(dir / "a.png") == rgb);
    auto gray = gradient_image(5, 9, 1);
    write_png(dir / "g.png", gray);
    auto back = read_image(dir / "g.png");
    REQUIRE(back.channels == 1);
    REQUIRE(to_rgb(back).channels == 3);
    REQUIRE(to_rgb(back).at(2, 3, 1) == back.at(2, 3));
    std::filesystem::remove_all(dir);
}
