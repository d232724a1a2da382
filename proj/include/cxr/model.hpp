// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "cxr/binary_io.hpp"
#include "cxr/digest.hpp"
#include "cxr/layers.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

// Validation figures stored with a model; precision and recall are for the
// Pneumonia class.
struct ValMetrics {
    double loss = std::numeric_limits<double>::quiet_NaN();
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;

    bool operator==(const ValMetrics& o) const;
};

// Ordered layer specs plus one (kernel, bias) pair per parametric layer.
//
// A sealed artifact has its weights rounded to float32 and its digest
// computed over the serialized bytes; any mutable access to the weights or
// metadata unseals it.
class ModelArtifact {
public:
    ModelArtifact() = default;
    ModelArtifact(Shape input_shape, std::vector<LayerSpec> layers);

    // conv(16,3)-relu-pool2, conv(32,3)-relu-pool2, conv(64,3)-relu-pool2,
    // flatten, dense(64)-relu, dense(2), softmax.
    static ModelArtifact reference(std::uint64_t seed, std::uint32_t side = 128);

    const Shape& input_shape() const { return input_shape_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    // Per-sample activation shape after each layer.
    const std::vector<Shape>& layer_shapes() const { return layer_shapes_; }
    Shape output_shape() const { return layer_shapes_.empty() ? input_shape_ : layer_shapes_.back(); }

    // Flat parameter list: kernel then bias for each parametric layer, in layer order.
    const std::vector<Tensor>& params() const { return params_; }
    std::vector<Tensor>& mutable_params();
    // Index of the first parameter tensor owned by layer i, or -1.
    int param_offset(std::size_t layer) const { return param_offset_[layer]; }
    std::size_t parameter_count() const;

    // Uniform fan-in scaled init (limit sqrt(6 / fan_in)); biases zero.
    void init_weights(std::uint64_t seed);

    std::uint64_t version() const { return version_; }
    void set_version(std::uint64_t v);
    const Digest& parent_digest() const { return parent_; }
    void set_parent_digest(const Digest& d);
    const ValMetrics& metrics() const { return metrics_; }
    void set_metrics(const ValMetrics& m);

    void seal();
    bool sealed() const { return sealed_; }
    // Digest of the sealed serialization; throws if unsealed.
    const Digest& digest() const;

    // Serializes (sealed or not); weights are written as float32.
    Bytes serialize() const;
    static ModelArtifact deserialize(std::span<const std::uint8_t> bytes);

    void save(const std::filesystem::path& path) const;
    static ModelArtifact load(const std::filesystem::path& path);

    // Architecture and metadata without weight blocks; shared with the
    // compressed format.
    void write_header(ByteWriter& w) const;
    static ModelArtifact read_header(ByteReader& r);

private:
    void build();

    Shape input_shape_;
    std::vector<LayerSpec> layers_;
    std::vector<Shape> layer_shapes_;
    std::vector<int> param_offset_;
    std::vector<Tensor> params_;
    std::uint64_t version_ = 1;
    Digest parent_{};
    ValMetrics metrics_;
    bool sealed_ = false;
    Digest digest_{};
};

inline constexpr char kModelMagic[4] = {'C', 'X', 'R', 'M'};
inline constexpr std::uint16_t kModelFormatVersion = 1;

// Softmax outputs for a (n, h, w, c) batch.
Tensor forward(const ModelArtifact& model, const Tensor& batch);

// Mean over the batch of -sum(y log p), with p clamped to [1e-7, 1 - 1e-7].
double loss_categorical_crossentropy(const Tensor& pred, const Tensor& onehot);

struct Gradients {
    std::vector<Tensor> params;  // aligned with ModelArtifact::params()
    double loss = 0.0;
    Tensor predictions;
};

// Gradient of the mean cross-entropy loss with respect to every parameter.
Gradients backward(const ModelArtifact& model, const Tensor& batch, const Tensor& onehot);

}  // namespace cxr
