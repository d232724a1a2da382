// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include <doctest.h>

#include <algorithm>

#include "cxr/error.hpp"
#include "cxr/model.hpp"
#include "cxr/saliency.hpp"

using namespace cxr;

TEST_SUITE("saliency") {

TEST_CASE("occlusion highlights the region the scorer reads") {
    GrayImage img(32, 32, 50);
    for (std::uint32_t y = 0; y < 8; ++y)
        for (std::uint32_t x = 20; x < 28; ++x) img.at(x, y) = 250;
    // Scores the brightness of one corner block only.
    ClassScorer score = [](const GrayImage& g) {
        double s = 0;
        for (std::uint32_t y = 0; y < 8; ++y)
            for (std::uint32_t x = 20; x < 28; ++x) s += g.at(x, y);
        return s;
    };
    auto h = occlusion_heatmap(score, img, {8, 4});
    CHECK(h.width == 32);
    CHECK(h.height == 32);
    CHECK_FALSE(h.degenerate);
    CHECK(h.evaluations == 64);
    auto peak = static_cast<std::uint32_t>(std::max_element(h.values.begin(), h.values.end()) - h.values.begin());
    CHECK(peak % 32 >= 20);
    CHECK(peak % 32 < 28);
    CHECK(peak / 32 < 8);
    CHECK(h.at(2, 30) == doctest::Approx(0.0));
    for (double v : h.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("a scorer that ignores the image is degenerate") {
    GrayImage img(16, 16, 9);
    auto h = occlusion_heatmap([](const GrayImage&) { return 0.5; }, img, {4, 4});
    CHECK(h.degenerate);
    for (double v : h.values) CHECK(v == 0.0);
}

TEST_CASE("heatmap images and overlay") {
    Heatmap h;
    h.width = 2;
    h.height = 1;
    h.values = {0.0, 1.0};
    auto g = heatmap_image(h);
    CHECK(g.at(0, 0) == 0);
    CHECK(g.at(1, 0) == 255);
    auto o = heatmap_overlay(GrayImage(2, 1, 100), h);
    CHECK(o.at(0, 0) == 50);
    CHECK(o.at(1, 0) == 178);
    CHECK_THROWS_AS(heatmap_overlay(GrayImage(3, 1), h), Error);
}

TEST_CASE("model-backed heatmap and argument checks") {
    auto m = ModelArtifact::reference(2, 32);
    GrayImage img(32, 32, 120);
    auto h = occlusion_heatmap(m, img, Label::kPneumonia, {16, 8});
    CHECK(h.values.size() == 32 * 32);
    CHECK_THROWS_AS(occlusion_heatmap(m, img, Label::kUnlabeled), Error);
    CHECK_THROWS_AS(occlusion_heatmap(m, img, Label::kPneumonia, {64, 8}), Error);
    CHECK_THROWS_AS(occlusion_heatmap(m, img, Label::kPneumonia, {8, 0}), Error);
}

}  // TEST_SUITE
