// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cxr/binary_io.hpp"
#include "cxr/digest.hpp"
#include "cxr/model.hpp"

namespace cxr {

// bits == kPassthroughBits stores a tensor as raw float32.
inline constexpr std::uint32_t kPassthroughBits = 32;

struct CompressionConfig {
    double sparsity = 0.9;
    std::uint32_t conv_bits = 8;
    std::uint32_t dense_bits = 5;
    // Biases are a rounding error in size and carry most of the accuracy
    // risk, so by default they are kept whole.
    bool compress_biases = false;
    // The sparsity target counts weights across the whole model and one
    // magnitude ranking decides which go. Small early conv layers have large
    // weights and keep most of them. Set this to prune every weight tensor
    // to the target separately instead.
    bool per_tensor_sparsity = false;

    // Sparsity in [0, 1); bits in [1, 16] or kPassthroughBits.
    void validate() const;
    static CompressionConfig passthrough();
};

struct PruneResult {
    Tensor weights;
    std::vector<bool> mask;  // true for survivors
};

// Zeroes the floor(sparsity * n) smallest-magnitude entries; ties go to the
// lower index.
PruneResult prune(const Tensor& weights, double sparsity);
// Same ordering, with the count of zeroed entries given directly.
PruneResult prune_smallest(const Tensor& weights, std::size_t k);

struct Quantized {
    std::vector<float> codebook;  // ascending
    std::vector<std::uint32_t> indices;
};

// At most 2^bits centroids from 1-D k-means seeded with linear spacing over
// [min, max]. When the input already has at most 2^bits distinct float32
// values the codebook is exactly those values.
Quantized quantize(std::span<const double> values, std::uint32_t bits);

struct TensorReport {
    std::size_t index = 0;
    std::size_t elements = 0;
    std::size_t survivors = 0;
    std::uint32_t bits = 0;
    std::size_t codebook_size = 0;
    std::size_t encoded_bytes = 0;
    double mse = 0.0;  // vs. the original weights
};

struct CompressedModel {
    Bytes bytes;
    Digest original_digest{};
    // Digest of the model decompress() will return.
    Digest reconstructed_digest{};
    Digest compressed_digest{};
    std::size_t original_size = 0;
    std::size_t compressed_size = 0;
    std::vector<TensorReport> tensors;

    double ratio() const { return compressed_size ? double(original_size) / double(compressed_size) : 0.0; }
};

inline constexpr char kCompressedMagic[4] = {'C', 'X', 'R', 'C'};
inline constexpr std::uint16_t kCompressedFormatVersion = 1;

// The artifact must be sealed. Self-checks by decoding the result.
CompressedModel compress_model(const ModelArtifact& artifact, const CompressionConfig& cfg = {});

// The pruned and quantized weights as they will come out of decompression,
// without building the file.
ModelArtifact prune_and_quantize(const ModelArtifact& artifact, const CompressionConfig& cfg = {});

struct DecodedModel {
    ModelArtifact model;  // sealed
    Digest original_digest{};
    Digest compressed_digest{};
};

// Verifies the trailing digest and the recorded reconstruction digest.
DecodedModel decompress_model(std::span<const std::uint8_t> bytes);

bool is_compressed_model(std::span<const std::uint8_t> bytes);

// Digest stored at the end of a compressed file (no verification).
Digest compressed_digest_of(std::span<const std::uint8_t> bytes);

}  // namespace cxr
