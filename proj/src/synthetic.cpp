// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "cxr/error.hpp"
#include "cxr/random.hpp"

namespace cxr {

GrayImage synthetic_disc_image(Label label, std::uint64_t seed, std::uint32_t width, std::uint32_t height) {
    require(label != Label::kUnlabeled, ErrorCode::kInvalidArgument, "synthetic images need a class");
    require(width >= 16 && height >= 16, ErrorCode::kInvalidArgument, "synthetic image too small");
    Rng rng(seed);
    const double side = std::min(width, height);
    const double radius = side * rng.uniform(0.19, 0.30);
    const double cx = rng.uniform(radius, width - radius);
    const double cy = rng.uniform(radius, height - radius);
    const bool bright = label == Label::kPneumonia;
    GrayImage img(width, height);
    for (std::uint32_t y = 0; y < height; ++y) {
        for (std::uint32_t x = 0; x < width; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            const bool inside = dx * dx + dy * dy <= radius * radius;
            double v;
            if (inside)
                v = bright ? rng.uniform(200.0, 240.0) : rng.uniform(5.0, 35.0);
            else
                v = rng.uniform(90.0, 130.0);
            img.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::floor(v), 0.0, 255.0));
        }
    }
    return img;
}

ImageSet synthetic_disc_set(std::size_t count, std::uint64_t seed, std::uint32_t side, double gamma) {
    ImageSet set;
    PreprocessConfig pp;
    pp.gamma = gamma;
    pp.target_side = side;
    for (std::size_t i = 0; i < count; ++i) {
        Label l = (i % 2 == 0) ? Label::kPneumonia : Label::kNormal;
        set.add(preprocess(synthetic_disc_image(l, Rng::mix(seed, i), side, side), pp), l);
    }
    return set;
}

}  // namespace cxr
