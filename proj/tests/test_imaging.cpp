// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include <doctest.h>

#include <cmath>

#include "cxr/error.hpp"
#include "cxr/imaging.hpp"
#include "cxr/random.hpp"
#include "test_util.hpp"

using namespace cxr;

namespace {

GrayImage ramp(std::uint32_t w, std::uint32_t h) {
    GrayImage img(w, h);
    for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x) img.at(x, y) = static_cast<std::uint8_t>((x * 7 + y * 13) % 256);
    return img;
}

GrayImage all_levels() {
    GrayImage img(256, 1);
    for (int i = 0; i < 256; ++i) img.at(i, 0) = static_cast<std::uint8_t>(i);
    return img;
}

}  // namespace

TEST_SUITE("imaging") {

TEST_CASE("gamma of mid grey squared is 64") {
    GrayImage img(1, 1, 128);
    CHECK(gamma_correct(img, 2.0).at(0, 0) == 64);
}

TEST_CASE("gamma keeps the endpoints") {
    for (double g : {0.5, 1.0, 2.1, 2.4, 2.8}) {
        GrayImage img(2, 1);
        img.at(0, 0) = 0;
        img.at(1, 0) = 255;
        auto out = gamma_correct(img, g);
        CHECK(out.at(0, 0) == 0);
        CHECK(out.at(1, 0) == 255);
    }
}

TEST_CASE("gamma one is the identity within rounding") {
    auto out = gamma_correct(all_levels(), 1.0);
    for (int i = 0; i < 256; ++i) CHECK(std::abs(int(out.at(i, 0)) - i) <= 1);
}

TEST_CASE("gamma matches the formula for every level") {
    for (double g : {0.5, 2.4, 2.8}) {
        auto out = gamma_correct(all_levels(), g);
        for (int i = 0; i < 256; ++i) {
            double v = std::floor(std::pow(i / 255.0, g) * 255.0 + 0.5);
            CHECK(out.at(i, 0) == static_cast<int>(std::clamp(v, 0.0, 255.0)));
        }
    }
}

TEST_CASE("gamma is monotone and darkens for gamma above one") {
    auto in = all_levels();
    auto out = gamma_correct(in, 2.8);
    for (int i = 1; i < 256; ++i) CHECK(out.at(i, 0) >= out.at(i - 1, 0));
    CHECK(out.mean() < in.mean());
    auto r = ramp(40, 30);
    CHECK(gamma_correct(r, 2.8).mean() < r.mean());
}

TEST_CASE("gamma rejects non-positive exponents") {
    GrayImage img(1, 1, 10);
    CHECK_THROWS_AS(gamma_correct(img, 0.0), Error);
    CHECK_THROWS_AS(gamma_correct(img, -1.0), Error);
    CHECK_THROWS_AS(gamma_correct(img, std::nan("")), Error);
}

TEST_CASE("resize produces the 16 KB raster") {
    auto out = resize_bilinear(ramp(1152, 760), 128);
    CHECK(out.width() == 128);
    CHECK(out.height() == 128);
    CHECK(out.pixels().size() == 16384);
}

TEST_CASE("resize of a constant image is constant") {
    GrayImage img(1152, 760, 97);
    auto out = resize_bilinear(img, 128);
    for (auto p : out.pixels()) CHECK(p == 97);
}

TEST_CASE("resize to the same size is the identity") {
    auto img = ramp(128, 128);
    CHECK(resize_bilinear(img, 128) == img);
}

TEST_CASE("upscaled horizontal step is monotone and matches a scalar reference") {
    GrayImage img(2, 2);
    img.at(0, 0) = img.at(0, 1) = 0;
    img.at(1, 0) = img.at(1, 1) = 255;
    auto out = resize_bilinear(img, 4);
    for (std::uint32_t y = 0; y < 4; ++y) {
        for (std::uint32_t x = 1; x < 4; ++x) CHECK(out.at(x, y) >= out.at(x - 1, y));
        // Reference: sample centre (x + 0.5) * 2/4 - 0.5, clamped.
        for (std::uint32_t x = 0; x < 4; ++x) {
            double sx = std::clamp((x + 0.5) * 0.5 - 0.5, 0.0, 1.0);
            int expect = static_cast<int>(std::floor(sx * 255.0 + 0.5));
            CHECK(std::abs(int(out.at(x, y)) - expect) <= 1);
        }
    }
}

TEST_CASE("resize rejects empty input") {
    CHECK_THROWS_AS(resize_bilinear(GrayImage(), 128), Error);
}

TEST_CASE("normalize scales to the unit interval") {
    GrayImage img(3, 1);
    img.at(0, 0) = 0;
    img.at(1, 0) = 51;
    img.at(2, 0) = 255;
    auto t = normalize(img);
    CHECK(t.shape() == Shape{1, 3, 1});
    CHECK(t[0] == 0.0);
    CHECK(t[1] == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(t[2] == 1.0);
}

TEST_CASE("denormalize inverts normalize on every byte") {
    auto img = all_levels();
    CHECK(denormalize(normalize(img)) == img);
}

TEST_CASE("preprocess applies gamma then resize") {
    auto raw = ramp(300, 200);
    PreprocessConfig cfg;
    cfg.gamma = 2.4;
    CHECK(preprocess(raw, cfg) == resize_bilinear(gamma_correct(raw, 2.4), 128));
    cfg.target_side = 4;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("identity augmentation leaves the image alone") {
    auto img = ramp(64, 64);
    Rng rng(3);
    CHECK(augment(img, AugmentConfig::identity(), rng) == img);
}

TEST_CASE("horizontal flip reverses columns and is an involution") {
    auto img = ramp(17, 9);
    AugmentDraw d;
    d.flip_h = true;
    auto once = apply_augment(img, d);
    for (std::uint32_t y = 0; y < 9; ++y)
        for (std::uint32_t x = 0; x < 17; ++x) CHECK(once.at(x, y) == img.at(16 - x, y));
    CHECK(apply_augment(once, d) == img);
}

TEST_CASE("sampled rotation stays within range") {
    AugmentConfig cfg;
    Rng rng(11);
    double lo = 0, hi = 0;
    for (int i = 0; i < 10000; ++i) {
        auto d = sample_augment(cfg, 128, 128, rng);
        CHECK(d.angle_deg >= -30.0);
        CHECK(d.angle_deg <= 30.0);
        CHECK(std::abs(d.shift_x) <= 0.2 * 128);
        CHECK(d.zoom_x >= 0.8);
        CHECK(d.zoom_x <= 1.2);
        lo = std::min(lo, d.angle_deg);
        hi = std::max(hi, d.angle_deg);
    }
    CHECK(lo < -29.0);
    CHECK(hi > 29.0);
}

TEST_CASE("augmentation is reproducible per seed and keeps the size") {
    auto img = ramp(128, 128);
    AugmentConfig cfg;
    Rng a(42), b(42), c(43);
    auto x = augment(img, cfg, a);
    CHECK(x == augment(img, cfg, b));
    CHECK(x.width() == 128);
    CHECK(x.height() == 128);
    CHECK_FALSE(x == augment(img, cfg, c));
}

TEST_CASE("augment config validation") {
    AugmentConfig cfg;
    cfg.width_shift = 1.5;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.rotation_range = -1;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("PGM round trip and malformed input") {
    auto img = ramp(31, 7);
    auto bytes = encode_pgm(img);
    CHECK(decode_pgm(bytes) == img);
    std::string text = "P5\n# comment\n2 1\n255\n\x01\x02";
    auto dec = decode_pgm(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    CHECK(dec.at(1, 0) == 2);
    bytes.pop_back();
    CHECK_THROWS_AS(decode_pgm(bytes), Error);
    std::string p2 = "P2\n1 1\n255\n0\n";
    CHECK_THROWS_AS(decode_pgm(std::span(reinterpret_cast<const std::uint8_t*>(p2.data()), p2.size())), Error);
    test::TempDir dir("pgm");
    write_pgm(dir / "a.pgm", img);
    CHECK(read_pgm(dir / "a.pgm") == img);
}

TEST_CASE("run-length packing is lossless") {
    GrayImage flat(128, 128, 0);
    CHECK(unpack_rle(pack_rle(flat)) == flat);
    CHECK(pack_rle(flat).size() < 4096);
    auto r = ramp(128, 128);
    CHECK(unpack_rle(pack_rle(r)) == r);
}

}  // TEST_SUITE
