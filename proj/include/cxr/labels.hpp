// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace cxr {

// Class indices are fixed: Normal -> 0, Pneumonia -> 1.
enum class Label : std::uint8_t {
    kNormal = 0,
    kPneumonia = 1,
    kUnlabeled = 2,
};

inline constexpr std::size_t kNumClasses = 2;

std::string_view label_name(Label label);
std::optional<Label> label_from_name(std::string_view name);

inline std::size_t class_index(Label label) { return static_cast<std::size_t>(label); }

// Verdict rule for a Pneumonia probability: argmax of the two-way softmax,
// with an exact 0.5 tie resolved towards Pneumonia.
inline Label verdict_for(double p_pneumonia) {
    return p_pneumonia >= 0.5 ? Label::kPneumonia : Label::kNormal;
}

}  // namespace cxr
