// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cxr/binary_io.hpp"

namespace cxr {

// Canonical Huffman code over symbols [0, alphabet). A symbol with length 0
// does not occur. Lengths are capped at kMaxCodeLength.
struct HuffmanTable {
    std::vector<std::uint8_t> lengths;

    std::size_t alphabet() const { return lengths.size(); }
};

inline constexpr unsigned kMaxCodeLength = 24;

// Code lengths from symbol frequencies. A lone used symbol gets a 1-bit code.
HuffmanTable build_huffman_table(std::span<const std::uint64_t> frequencies);

struct HuffmanStream {
    HuffmanTable table;
    Bytes bits;                  // MSB-first, zero padded to a byte
    std::uint64_t bit_count = 0;
};

HuffmanStream huffman_encode(std::span<const std::uint32_t> symbols, std::size_t alphabet);

// Decodes exactly `count` symbols. Throws a corruption error naming the bit
// offset on an invalid code or an early end of stream.
std::vector<std::uint32_t> huffman_decode(std::span<const std::uint8_t> bits, std::uint64_t bit_count,
                                          const HuffmanTable& table, std::size_t count);

}  // namespace cxr
