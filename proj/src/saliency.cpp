// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/saliency.hpp"

#include <algorithm>
#include <cmath>

#include "cxr/error.hpp"

namespace cxr {

ClassScorer model_scorer(const ModelArtifact& model, Label target) {
    require(target != Label::kUnlabeled, ErrorCode::kInvalidArgument, "heatmap target must be a class");
    return [&model, target](const GrayImage& img) {
        auto out = forward(model, normalize(img).reshaped({1, img.height(), img.width(), 1}));
        return out[class_index(target)];
    };
}

Heatmap occlusion_heatmap(const ClassScorer& score, const GrayImage& img, const OcclusionConfig& cfg) {
    require(!img.empty(), ErrorCode::kInvalidArgument, "empty image");
    require(cfg.patch >= 1 && cfg.stride >= 1, ErrorCode::kInvalidArgument, "patch and stride must be positive");
    require(cfg.patch <= img.width() && cfg.patch <= img.height(), ErrorCode::kInvalidArgument,
            "patch larger than the image");

    const auto fill = static_cast<std::uint8_t>(std::lround(img.mean()));
    const double base = score(img);

    Heatmap h;
    h.width = img.width();
    h.height = img.height();
    std::vector<double> acc(std::size_t{h.width} * h.height, 0.0);
    for (std::uint32_t y0 = 0; y0 < img.height(); y0 += cfg.stride) {
        for (std::uint32_t x0 = 0; x0 < img.width(); x0 += cfg.stride) {
            auto x1 = std::min(x0 + cfg.patch, img.width());
            auto y1 = std::min(y0 + cfg.patch, img.height());
            GrayImage occluded = img;
            for (auto y = y0; y < y1; ++y)
                for (auto x = x0; x < x1; ++x) occluded.at(x, y) = fill;
            double drop = base - score(occluded);
            ++h.evaluations;
            for (auto y = y0; y < y1; ++y)
                for (auto x = x0; x < x1; ++x) acc[std::size_t{y} * h.width + x] += drop;
        }
    }
    auto [lo, hi] = std::minmax_element(acc.begin(), acc.end());
    double range = *hi - *lo;
    h.values.assign(acc.size(), 0.0);
    if (!(range > 1e-12) || !std::isfinite(range)) {
        h.degenerate = true;
        return h;
    }
    for (std::size_t i = 0; i < acc.size(); ++i) h.values[i] = (acc[i] - *lo) / range;
    return h;
}

Heatmap occlusion_heatmap(const ModelArtifact& model, const GrayImage& img, Label target, const OcclusionConfig& cfg) {
    return occlusion_heatmap(model_scorer(model, target), img, cfg);
}

GrayImage heatmap_image(const Heatmap& h) {
    GrayImage out(h.width, h.height);
    for (std::size_t i = 0; i < h.values.size(); ++i)
        out.pixels()[i] = static_cast<std::uint8_t>(std::lround(std::clamp(h.values[i], 0.0, 1.0) * 255.0));
    return out;
}

GrayImage heatmap_overlay(const GrayImage& img, const Heatmap& h) {
    require(img.width() == h.width && img.height() == h.height, ErrorCode::kShape, "heatmap size mismatch");
    auto hm = heatmap_image(h);
    GrayImage out(h.width, h.height);
    for (std::size_t i = 0; i < hm.pixels().size(); ++i)
        out.pixels()[i] = static_cast<std::uint8_t>((unsigned{img.pixels()[i]} + hm.pixels()[i] + 1) / 2);
    return out;
}

}  // namespace cxr
