// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "cxr/compress.hpp"
#include "cxr/error.hpp"
#include "cxr/huffman.hpp"
#include "cxr/model.hpp"
#include "cxr/random.hpp"

using namespace cxr;

TEST_SUITE("compress") {

TEST_CASE("huffman round trip on fuzzed streams") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        const std::size_t alphabet = 1 + rng.below(300);
        std::vector<std::uint32_t> syms(10000);
        // Skewed draws so code lengths vary.
        for (auto& s : syms) {
            double u = rng.uniform();
            s = static_cast<std::uint32_t>(std::min<double>(alphabet - 1, std::floor(u * u * u * alphabet)));
        }
        auto enc = huffman_encode(syms, alphabet);
        CHECK(enc.bits.size() == (enc.bit_count + 7) / 8);
        CHECK(huffman_decode(enc.bits, enc.bit_count, enc.table, syms.size()) == syms);
    }
}

TEST_CASE("huffman degenerate and extreme inputs") {
    std::vector<std::uint32_t> one(500, 3);
    auto enc = huffman_encode(one, 4);
    CHECK(huffman_decode(enc.bits, enc.bit_count, enc.table, one.size()) == one);

    // Fibonacci frequencies would need very long codes; lengths stay capped.
    std::vector<std::uint64_t> fib{1, 1};
    while (fib.size() < 40) fib.push_back(fib[fib.size() - 1] + fib[fib.size() - 2]);
    auto t = build_huffman_table(fib);
    CHECK(*std::max_element(t.lengths.begin(), t.lengths.end()) <= kMaxCodeLength);
    double kraft = 0;
    for (auto l : t.lengths)
        if (l) kraft += std::ldexp(1.0, -l);
    CHECK(kraft <= 1.0);

    std::vector<std::uint32_t> bad{7};
    CHECK_THROWS_AS(huffman_encode(bad, 4), Error);
    CHECK_THROWS_AS(huffman_decode(enc.bits, enc.bit_count, enc.table, one.size() + 100), Error);
}

TEST_CASE("pruning keeps the largest magnitudes") {
    Tensor w({10}, std::vector<double>{0.1, -0.9, 0.3, -0.2, 0.8, 0.05, -0.4, 0.6, 0.7, -0.01});
    auto p = prune(w, 0.7);
    CHECK(std::count(p.mask.begin(), p.mask.end(), true) == 3);
    CHECK(p.weights[1] == -0.9);
    CHECK(p.weights[4] == 0.8);
    CHECK(p.weights[8] == 0.7);
    CHECK(p.weights[0] == 0.0);
    CHECK(prune(w, 0.0).weights == w);
    CHECK_THROWS_AS(prune(w, 1.0), Error);
}

TEST_CASE("quantization codebook size and error bound") {
    Rng rng(3);
    std::vector<double> v(2000);
    for (auto& x : v) x = rng.uniform(-1, 1);
    for (std::uint32_t bits : {1u, 3u, 5u, 8u}) {
        auto q = quantize(v, bits);
        CHECK(q.codebook.size() <= (std::size_t{1} << bits));
        CHECK(std::is_sorted(q.codebook.begin(), q.codebook.end()));
        CHECK(q.indices.size() == v.size());
        double worst = 0;
        for (std::size_t i = 0; i < v.size(); ++i) worst = std::max(worst, std::abs(q.codebook[q.indices[i]] - v[i]));
        CHECK(worst <= 2.0 / (1 << bits) + 1e-6);
    }
    CHECK_THROWS_AS(quantize(v, 0), Error);
    CHECK_THROWS_AS(quantize(v, 17), Error);
}

TEST_CASE("decompress reproduces prune_and_quantize exactly") {
    auto m = ModelArtifact::reference(11, 64);
    m.seal();
    for (auto cfg : {CompressionConfig{}, CompressionConfig{0.5, 6, 4, true},
                     CompressionConfig{0.9, 8, 5, false, true}, CompressionConfig::passthrough()}) {
        auto cm = compress_model(m, cfg);
        CHECK(is_compressed_model(cm.bytes));
        CHECK_FALSE(is_compressed_model(m.serialize()));
        auto dec = decompress_model(cm.bytes);
        auto ref = prune_and_quantize(m, cfg);
        CHECK(dec.model.params() == ref.params());
        CHECK(dec.model.digest() == cm.reconstructed_digest);
        CHECK(dec.original_digest == m.digest());
        CHECK(dec.compressed_digest == cm.compressed_digest);
        CHECK(compressed_digest_of(cm.bytes) == cm.compressed_digest);
        CHECK(cm.tensors.size() == m.params().size());
    }
    auto dflt = compress_model(m);
    CHECK(dflt.ratio() >= 10.0);
    // Biases stay exact by default.
    auto ref = prune_and_quantize(m);
    for (std::size_t i = 1; i < m.params().size(); i += 2)
        for (std::size_t j = 0; j < m.params()[i].size(); ++j)
            CHECK(ref.params()[i][j] == static_cast<double>(static_cast<float>(m.params()[i][j])));
}

TEST_CASE("sparsity target is allocated model-wide by magnitude") {
    auto m = ModelArtifact::reference(14, 32);
    m.seal();
    std::vector<std::size_t> kernels;
    std::size_t total = 0;
    for (std::size_t i = 0; i < m.params().size(); i += 2) {
        kernels.push_back(i);
        total += m.params()[i].size();
    }
    for (double s : {0.5, 0.9}) {
        CompressionConfig cfg{s, kPassthroughBits, kPassthroughBits};
        auto out = prune_and_quantize(m, cfg);
        std::size_t zeroed = 0;
        double max_pruned = 0.0, min_kept = 1e300;
        for (std::size_t i : kernels) {
            for (std::size_t j = 0; j < m.params()[i].size(); ++j) {
                const double w = std::abs(m.params()[i][j]);
                if (out.params()[i][j] == 0.0) {
                    ++zeroed;
                    max_pruned = std::max(max_pruned, w);
                } else {
                    CHECK(out.params()[i][j] == m.params()[i][j]);
                    min_kept = std::min(min_kept, w);
                }
            }
        }
        CHECK(zeroed == static_cast<std::size_t>(std::floor(s * double(total))));
        CHECK(max_pruned <= min_kept);

        cfg.per_tensor_sparsity = true;
        auto each = prune_and_quantize(m, cfg);
        for (std::size_t i : kernels) {
            const auto& t = each.params()[i];
            auto z = static_cast<std::size_t>(std::count(t.data(), t.data() + t.size(), 0.0));
            CHECK(z == static_cast<std::size_t>(std::floor(s * double(t.size()))));
        }
    }
}

TEST_CASE("passthrough keeps every weight") {
    auto m = ModelArtifact::reference(12, 32);
    m.seal();
    auto dec = decompress_model(compress_model(m, CompressionConfig::passthrough()).bytes);
    CHECK(dec.model.params() == ModelArtifact::deserialize(m.serialize()).params());
}

TEST_CASE("tampering is detected") {
    auto m = ModelArtifact::reference(13, 32);
    m.seal();
    auto cm = compress_model(m);
    std::set<std::size_t> spots{0, 5, cm.bytes.size() / 3, cm.bytes.size() / 2, cm.bytes.size() - 1};
    for (auto at : spots) {
        auto bad = cm.bytes;
        bad[at] ^= 0x10;
        CHECK_THROWS_AS(decompress_model(bad), Error);
    }
    Bytes truncated(cm.bytes.begin(), cm.bytes.begin() + 50);
    CHECK_THROWS_AS(decompress_model(truncated), Error);
    auto unsealed = ModelArtifact::reference(13, 32);
    CHECK_THROWS_AS(compress_model(unsealed), Error);
    CHECK_THROWS_AS(compress_model(m, {1.5, 8, 5, false}), Error);
}

}  // TEST_SUITE
