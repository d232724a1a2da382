// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cxr/imaging.hpp"
#include "cxr/labels.hpp"
#include "cxr/model.hpp"

namespace cxr {

struct Heatmap {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<double> values;  // row-major, in [0, 1]
    // Set when every cell had the same score drop; values are then all 0.
    bool degenerate = false;
    std::size_t evaluations = 0;  // occluded forward passes

    double at(std::uint32_t x, std::uint32_t y) const { return values[std::size_t{y} * width + x]; }
};

// Probability of the target class for one image.
using ClassScorer = std::function<double(const GrayImage&)>;

ClassScorer model_scorer(const ModelArtifact& model, Label target);

struct OcclusionConfig {
    std::uint32_t patch = 16;
    std::uint32_t stride = 8;
};

// Window origins are 0, stride, 2*stride, ... below the side; windows are
// clipped at the border. Each pixel accumulates the probability drop of
// every window covering it; the map is then min-max normalized.
Heatmap occlusion_heatmap(const ClassScorer& score, const GrayImage& img, const OcclusionConfig& cfg = {});
Heatmap occlusion_heatmap(const ModelArtifact& model, const GrayImage& img, Label target,
                          const OcclusionConfig& cfg = {});

GrayImage heatmap_image(const Heatmap& h);
// 50/50 blend of the input and the heatmap.
GrayImage heatmap_overlay(const GrayImage& img, const Heatmap& h);

}  // namespace cxr
