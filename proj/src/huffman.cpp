// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/huffman.hpp"

#include <algorithm>
#include <queue>

#include "cxr/error.hpp"

namespace cxr {

namespace {

std::vector<std::uint8_t> code_lengths(std::span<const std::uint64_t> freq) {
    struct Node {
        std::uint64_t weight;
        std::uint32_t id;  // tie-break keeps the tree deterministic
    };
    auto cmp = [](const Node& a, const Node& b) { return a.weight != b.weight ? a.weight > b.weight : a.id > b.id; };

    std::vector<std::uint8_t> lengths(freq.size(), 0);
    std::vector<std::int64_t> parent;
    std::priority_queue<Node, std::vector<Node>, decltype(cmp)> heap(cmp);
    std::vector<std::uint32_t> leaf_node(freq.size(), 0);
    for (std::size_t s = 0; s < freq.size(); ++s) {
        if (freq[s] == 0) continue;
        leaf_node[s] = static_cast<std::uint32_t>(parent.size());
        heap.push({freq[s], static_cast<std::uint32_t>(parent.size())});
        parent.push_back(-1);
    }
    if (parent.empty()) return lengths;
    if (parent.size() == 1) {
        for (std::size_t s = 0; s < freq.size(); ++s)
            if (freq[s]) lengths[s] = 1;
        return lengths;
    }
    while (heap.size() > 1) {
        Node a = heap.top();
        heap.pop();
        Node b = heap.top();
        heap.pop();
        auto id = static_cast<std::uint32_t>(parent.size());
        parent.push_back(-1);
        parent[a.id] = id;
        parent[b.id] = id;
        heap.push({a.weight + b.weight, id});
    }
    for (std::size_t s = 0; s < freq.size(); ++s) {
        if (freq[s] == 0) continue;
        unsigned depth = 0;
        for (auto n = static_cast<std::int64_t>(leaf_node[s]); parent[n] >= 0; n = parent[n]) ++depth;
        lengths[s] = static_cast<std::uint8_t>(std::min(depth, 255u));
    }
    return lengths;
}

struct Canonical {
    std::vector<std::uint32_t> codes;                 // per symbol
    std::vector<std::uint32_t> first_code;            // per length
    std::vector<std::uint32_t> count;                 // per length
    std::vector<std::uint32_t> offset;                // per length, into sorted
    std::vector<std::uint32_t> sorted;                // symbols by (length, symbol)
};

Canonical canonical(const HuffmanTable& t) {
    Canonical c;
    c.codes.assign(t.alphabet(), 0);
    c.count.assign(kMaxCodeLength + 1, 0);
    c.first_code.assign(kMaxCodeLength + 2, 0);
    c.offset.assign(kMaxCodeLength + 2, 0);
    for (auto l : t.lengths) {
        require(l <= kMaxCodeLength, ErrorCode::kFormat, "huffman code length " + std::to_string(l) + " too long");
        if (l) ++c.count[l];
    }
    std::uint32_t code = 0;
    std::uint32_t idx = 0;
    for (unsigned len = 1; len <= kMaxCodeLength; ++len) {
        code = (code + (len > 1 ? c.count[len - 1] : 0)) << (len > 1 ? 1 : 0);
        c.first_code[len] = code;
        c.offset[len] = idx;
        idx += c.count[len];
    }
    // Kraft check: an over-subscribed table cannot be decoded.
    std::uint64_t kraft = 0;
    for (unsigned len = 1; len <= kMaxCodeLength; ++len) kraft += std::uint64_t{c.count[len]} << (kMaxCodeLength - len);
    require(kraft <= (std::uint64_t{1} << kMaxCodeLength), ErrorCode::kCorrupt, "huffman table is over-subscribed");

    c.sorted.resize(idx);
    std::vector<std::uint32_t> next(kMaxCodeLength + 1, 0);
    for (std::uint32_t s = 0; s < t.alphabet(); ++s) {
        auto l = t.lengths[s];
        if (!l) continue;
        c.codes[s] = c.first_code[l] + next[l];
        c.sorted[c.offset[l] + next[l]] = s;
        ++next[l];
    }
    return c;
}

}  // namespace

HuffmanTable build_huffman_table(std::span<const std::uint64_t> frequencies) {
    std::vector<std::uint64_t> freq(frequencies.begin(), frequencies.end());
    HuffmanTable t;
    for (;;) {
        t.lengths = code_lengths(freq);
        unsigned longest = t.lengths.empty() ? 0u : *std::max_element(t.lengths.begin(), t.lengths.end());
        if (longest <= kMaxCodeLength) return t;
        // Flatten the distribution and retry; only reachable with extreme skew.
        for (auto& f : freq)
            if (f) f = (f >> 1) | 1;
    }
}

HuffmanStream huffman_encode(std::span<const std::uint32_t> symbols, std::size_t alphabet) {
    std::vector<std::uint64_t> freq(alphabet, 0);
    for (auto s : symbols) {
        require(s < alphabet, ErrorCode::kInvalidArgument, "symbol " + std::to_string(s) + " outside alphabet");
        ++freq[s];
    }
    HuffmanStream out;
    out.table = build_huffman_table(freq);
    auto c = canonical(out.table);

    std::uint64_t total = 0;
    for (auto s : symbols) total += out.table.lengths[s];
    out.bits.assign((total + 7) / 8, 0);
    std::uint64_t pos = 0;
    for (auto s : symbols) {
        auto len = out.table.lengths[s];
        auto code = c.codes[s];
        for (int b = len - 1; b >= 0; --b, ++pos)
            if ((code >> b) & 1u) out.bits[pos >> 3] |= static_cast<std::uint8_t>(0x80u >> (pos & 7));
    }
    out.bit_count = total;
    return out;
}

std::vector<std::uint32_t> huffman_decode(std::span<const std::uint8_t> bits, std::uint64_t bit_count,
                                          const HuffmanTable& table, std::size_t count) {
    require(bit_count <= std::uint64_t{bits.size()} * 8, ErrorCode::kCorrupt, "huffman bit count exceeds buffer");
    auto c = canonical(table);
    std::vector<std::uint32_t> out;
    out.reserve(count);
    std::uint64_t pos = 0;
    while (out.size() < count) {
        std::uint64_t start = pos;
        std::uint32_t code = 0;
        bool found = false;
        for (unsigned len = 1; len <= kMaxCodeLength; ++len) {
            require(pos < bit_count, ErrorCode::kCorrupt,
                    "huffman stream ended inside a code at bit " + std::to_string(start));
            code = (code << 1) | ((bits[pos >> 3] >> (7 - (pos & 7))) & 1u);
            ++pos;
            if (c.count[len] && code - c.first_code[len] < c.count[len] && code >= c.first_code[len]) {
                out.push_back(c.sorted[c.offset[len] + (code - c.first_code[len])]);
                found = true;
                break;
            }
        }
        require(found, ErrorCode::kCorrupt, "invalid huffman code at bit " + std::to_string(start));
    }
    require(pos == bit_count, ErrorCode::kCorrupt,
            "huffman stream has " + std::to_string(bit_count - pos) + " unused bits after symbol " +
                std::to_string(count));
    return out;
}

}  // namespace cxr
