// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace cxr {

// SHA-256 content fingerprint used for model artifacts and registry keys.
using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(const Digest& digest);
std::optional<Digest> digest_from_hex(std::string_view hex);

inline bool is_zero(const Digest& d) {
    for (auto b : d)
        if (b != 0) return false;
    return true;
}

// IEEE 802.3 CRC-32 (the zlib polynomial).
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace cxr
