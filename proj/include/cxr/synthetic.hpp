// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>

#include "cxr/imaging.hpp"
#include "cxr/labels.hpp"
#include "cxr/train.hpp"

namespace cxr {

// Bright-disc (Pneumonia) vs. dark-disc (Normal) images on a noisy mid-gray
// background. The disc covers at least ~11% of the frame, so the two classes
// are separable by mean intensity alone.
GrayImage synthetic_disc_image(Label label, std::uint64_t seed, std::uint32_t width = 128,
                               std::uint32_t height = 128);

// Balanced set, alternating labels, already preprocessed (gamma applied) at
// side x side.
ImageSet synthetic_disc_set(std::size_t count, std::uint64_t seed, std::uint32_t side = 128,
                            double gamma = 2.4);

}  // namespace cxr
