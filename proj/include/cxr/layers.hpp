// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cxr/tensor.hpp"

namespace cxr {

enum class LayerKind : std::uint8_t {
    kConv2d = 1,
    kMaxPool2d = 2,
    kRelu = 3,
    kFlatten = 4,
    kDense = 5,
    kSoftmax = 6,
};

std::string layer_kind_name(LayerKind kind);
std::optional<LayerKind> layer_kind_from_name(const std::string& name);

// Convolutions use valid padding. For conv2d `units` is the filter count and
// `kernel` the square kernel side; for maxpool2d `kernel` is the window side
// and stride defaults to the window; for dense `units` is the output width.
struct LayerSpec {
    LayerKind kind = LayerKind::kRelu;
    std::uint32_t units = 0;
    std::uint32_t kernel = 0;
    std::uint32_t stride = 1;

    static LayerSpec conv2d(std::uint32_t filters, std::uint32_t kernel, std::uint32_t stride = 1);
    static LayerSpec maxpool2d(std::uint32_t window);
    static LayerSpec relu();
    static LayerSpec flatten();
    static LayerSpec dense(std::uint32_t units);
    static LayerSpec softmax();

    bool parametric() const { return kind == LayerKind::kConv2d || kind == LayerKind::kDense; }

    // Per-sample output shape for a per-sample input shape; throws a shape
    // error when the layer cannot accept the input.
    Shape output_shape(const Shape& input) const;
    // Shapes of (kernel, bias) for parametric layers, empty otherwise.
    std::vector<Shape> param_shapes(const Shape& input) const;

    bool operator==(const LayerSpec&) const = default;
};

// Batch kernels. Batch tensors carry the sample count as the leading
// dimension; image activations are (n, h, w, c).
namespace layers {

Tensor conv2d_forward(const Tensor& in, const Tensor& kernel, const Tensor& bias, std::uint32_t stride);
// grad_in may be null when the input gradient is not needed (first layer).
// grad_kernel and grad_bias are accumulated into, not overwritten.
void conv2d_backward(const Tensor& in, const Tensor& kernel, std::uint32_t stride, const Tensor& grad_out,
                     Tensor* grad_in, Tensor& grad_kernel, Tensor& grad_bias);

Tensor maxpool2d_forward(const Tensor& in, std::uint32_t window, std::uint32_t stride,
                         std::vector<std::uint32_t>* argmax);
Tensor maxpool2d_backward(const Shape& in_shape, const std::vector<std::uint32_t>& argmax, const Tensor& grad_out);

Tensor relu_forward(const Tensor& in);
Tensor relu_backward(const Tensor& in, const Tensor& grad_out);

Tensor dense_forward(const Tensor& in, const Tensor& weights, const Tensor& bias);
void dense_backward(const Tensor& in, const Tensor& weights, const Tensor& grad_out, Tensor* grad_in,
                    Tensor& grad_weights, Tensor& grad_bias);

// Row-wise softmax over (n, k).
Tensor softmax_forward(const Tensor& in);
Tensor softmax_backward(const Tensor& out, const Tensor& grad_out);

}  // namespace layers
}  // namespace cxr
