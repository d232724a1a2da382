// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cxr/error.hpp"

namespace cxr {

std::string layer_kind_name(LayerKind kind) {
    switch (kind) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kMaxPool2d: return "maxpool2d";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kDense: return "dense";
    case LayerKind::kSoftmax: return "softmax";
    }
    return "unknown";
}

std::optional<LayerKind> layer_kind_from_name(const std::string& name) {
    for (auto k : {LayerKind::kConv2d, LayerKind::kMaxPool2d, LayerKind::kRelu, LayerKind::kFlatten,
                   LayerKind::kDense, LayerKind::kSoftmax})
        if (layer_kind_name(k) == name) return k;
    return std::nullopt;
}

LayerSpec LayerSpec::conv2d(std::uint32_t filters, std::uint32_t kernel, std::uint32_t stride) {
    return {LayerKind::kConv2d, filters, kernel, stride};
}
LayerSpec LayerSpec::maxpool2d(std::uint32_t window) { return {LayerKind::kMaxPool2d, 0, window, window}; }
LayerSpec LayerSpec::relu() { return {LayerKind::kRelu, 0, 0, 1}; }
LayerSpec LayerSpec::flatten() { return {LayerKind::kFlatten, 0, 0, 1}; }
LayerSpec LayerSpec::dense(std::uint32_t units) { return {LayerKind::kDense, units, 0, 1}; }
LayerSpec LayerSpec::softmax() { return {LayerKind::kSoftmax, 0, 0, 1}; }

Shape LayerSpec::output_shape(const Shape& in) const {
    auto name = layer_kind_name(kind);
    switch (kind) {
    case LayerKind::kConv2d:
    case LayerKind::kMaxPool2d: {
        require(in.size() == 3, ErrorCode::kShape, name + " expects (h, w, c) input, got " + shape_string(in));
        require(kernel >= 1 && stride >= 1, ErrorCode::kShape, name + ": kernel and stride must be >= 1");
        require(in[0] >= kernel && in[1] >= kernel, ErrorCode::kShape,
                name + ": window " + std::to_string(kernel) + " larger than input " + shape_string(in));
        std::size_t oh = (in[0] - kernel) / stride + 1;
        std::size_t ow = (in[1] - kernel) / stride + 1;
        if (kind == LayerKind::kConv2d) {
            require(units >= 1, ErrorCode::kShape, "conv2d needs at least one filter");
            return {oh, ow, units};
        }
        return {oh, ow, in[2]};
    }
    case LayerKind::kRelu: return in;
    case LayerKind::kFlatten: return {shape_size(in)};
    case LayerKind::kDense:
        require(in.size() == 1, ErrorCode::kShape, "dense expects a flat input, got " + shape_string(in));
        require(units >= 1, ErrorCode::kShape, "dense needs at least one unit");
        return {units};
    case LayerKind::kSoftmax:
        require(in.size() == 1, ErrorCode::kShape, "softmax expects a flat input, got " + shape_string(in));
        return in;
    }
    fail(ErrorCode::kShape, "unknown layer kind");
}

std::vector<Shape> LayerSpec::param_shapes(const Shape& in) const {
    if (kind == LayerKind::kConv2d) {
        output_shape(in);
        return {{kernel, kernel, in[2], units}, {units}};
    }
    if (kind == LayerKind::kDense) {
        output_shape(in);
        return {{in[0], units}, {units}};
    }
    return {};
}

namespace layers {

namespace {

// y[0..C) += sum_j x[j] * w[j][0..C), with y held in registers for the
// common channel counts.
template <std::size_t C>
void accumulate_row_fixed(const double* x, const double* w, std::size_t J, double* y) {
    double acc[C];
    for (std::size_t c = 0; c < C; ++c) acc[c] = y[c];
    for (std::size_t j = 0; j < J; ++j) {
        const double a = x[j];
        if (a == 0.0) continue;
        const double* wj = w + j * C;
        for (std::size_t c = 0; c < C; ++c) acc[c] += a * wj[c];
    }
    for (std::size_t c = 0; c < C; ++c) y[c] = acc[c];
}

void accumulate_row(const double* x, const double* w, std::size_t J, std::size_t C, double* y) {
    switch (C) {
    case 8: return accumulate_row_fixed<8>(x, w, J, y);
    case 16: return accumulate_row_fixed<16>(x, w, J, y);
    case 32: return accumulate_row_fixed<32>(x, w, J, y);
    case 64: return accumulate_row_fixed<64>(x, w, J, y);
    default: break;
    }
    for (std::size_t j = 0; j < J; ++j) {
        const double a = x[j];
        if (a == 0.0) continue;
        const double* wj = w + j * C;
        for (std::size_t c = 0; c < C; ++c) y[c] += a * wj[c];
    }
}

// C[M x N] += A[M x K] * B[K x N], all row-major with leading dimensions.
// Outputs are held in 4 x 8 register tiles and K is walked in blocks so the
// B panel stays in cache. The summation order is fixed, so results are
// reproducible run to run.
void gemm_acc(std::size_t M, std::size_t N, std::size_t K, const double* __restrict A, std::size_t lda,
              const double* __restrict B, std::size_t ldb, double* __restrict C, std::size_t ldc) {
    constexpr std::size_t kBlockK = 256;
    for (std::size_t k0 = 0; k0 < K; k0 += kBlockK) {
        const std::size_t k1 = std::min(K, k0 + kBlockK);
        std::size_t m = 0;
        for (; m + 4 <= M; m += 4) {
            const double* a0 = A + m * lda;
            const double* a1 = a0 + lda;
            const double* a2 = a1 + lda;
            const double* a3 = a2 + lda;
            std::size_t n = 0;
            for (; n + 8 <= N; n += 8) {
                double t0[8] = {}, t1[8] = {}, t2[8] = {}, t3[8] = {};
                for (std::size_t k = k0; k < k1; ++k) {
                    const double* bk = B + k * ldb + n;
                    const double x0 = a0[k], x1 = a1[k], x2 = a2[k], x3 = a3[k];
                    for (std::size_t j = 0; j < 8; ++j) {
                        const double v = bk[j];
                        t0[j] += x0 * v;
                        t1[j] += x1 * v;
                        t2[j] += x2 * v;
                        t3[j] += x3 * v;
                    }
                }
                for (std::size_t j = 0; j < 8; ++j) {
                    C[m * ldc + n + j] += t0[j];
                    C[(m + 1) * ldc + n + j] += t1[j];
                    C[(m + 2) * ldc + n + j] += t2[j];
                    C[(m + 3) * ldc + n + j] += t3[j];
                }
            }
            for (; n < N; ++n) {
                double t[4] = {};
                for (std::size_t k = k0; k < k1; ++k) {
                    const double bk = B[k * ldb + n];
                    t[0] += a0[k] * bk;
                    t[1] += a1[k] * bk;
                    t[2] += a2[k] * bk;
                    t[3] += a3[k] * bk;
                }
                for (int i = 0; i < 4; ++i) C[(m + i) * ldc + n] += t[i];
            }
        }
        for (; m < M; ++m) {
            const double* am = A + m * lda;
            for (std::size_t n = 0; n < N; ++n) {
                double t = 0.0;
                for (std::size_t k = k0; k < k1; ++k) t += am[k] * B[k * ldb + n];
                C[m * ldc + n] += t;
            }
        }
    }
}

// Patch matrix for one sample: row (oy, ox) holds the k x k x cin window in
// kernel order, so the convolution is a plain matrix product.
void im2col(const double* X, std::size_t w, std::size_t cin, std::size_t k, std::size_t stride, std::size_t oh,
            std::size_t ow, double* P) {
    const std::size_t row = k * cin;
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
            double* p = P + (oy * ow + ox) * k * row;
            for (std::size_t ky = 0; ky < k; ++ky)
                std::copy_n(X + ((oy * stride + ky) * w + ox * stride) * cin, row, p + ky * row);
        }
}

// C[K x N] += A[M x K]^T * B[M x N]. Four rows of A and B are folded into
// each pass over C, which cuts the traffic on C fourfold.
void gemm_tn_acc(std::size_t M, std::size_t N, std::size_t K, const double* __restrict A,
                 const double* __restrict B, double* __restrict C) {
    std::size_t m = 0;
    for (; m + 4 <= M; m += 4) {
        const double* a = A + m * K;
        const double* b = B + m * N;
        for (std::size_t k = 0; k < K; ++k) {
            const double x0 = a[k], x1 = a[K + k], x2 = a[2 * K + k], x3 = a[3 * K + k];
            double* c = C + k * N;
            for (std::size_t n = 0; n < N; ++n) c[n] += x0 * b[n] + x1 * b[N + n] + x2 * b[2 * N + n] + x3 * b[3 * N + n];
        }
    }
    for (; m < M; ++m)
        for (std::size_t k = 0; k < K; ++k) {
            const double x = A[m * K + k];
            double* c = C + k * N;
            for (std::size_t n = 0; n < N; ++n) c[n] += x * B[m * N + n];
        }
}

void transpose(const double* src, std::size_t rows, std::size_t cols, double* dst) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// Per-thread scratch reused across calls; fresh multi-megabyte buffers on
// every call cost more in page faults than the arithmetic they feed.
std::vector<double>& scratch(int slot, std::size_t n) {
    thread_local std::vector<double> buffers[2];
    auto& b = buffers[slot];
    if (b.size() < n) b.resize(n);
    return b;
}


void expect_rank(const Tensor& t, std::size_t rank, const char* what) {
    require(t.rank() == rank, ErrorCode::kShape,
            std::string(what) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(t.shape()));
}

}  // namespace

Tensor conv2d_forward(const Tensor& in, const Tensor& kernel, const Tensor& bias, std::uint32_t stride) {
    expect_rank(in, 4, "conv2d input");
    expect_rank(kernel, 4, "conv2d kernel");
    const std::size_t n = in.dim(0), h = in.dim(1), w = in.dim(2), cin = in.dim(3);
    const std::size_t k = kernel.dim(0), cout = kernel.dim(3);
    require(kernel.dim(1) == k && kernel.dim(2) == cin && bias.size() == cout && h >= k && w >= k && stride >= 1,
            ErrorCode::kShape,
            "conv2d: kernel " + shape_string(kernel.shape()) + " incompatible with input " + shape_string(in.shape()));
    const std::size_t oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
    Tensor out({n, oh, ow, cout});
    const std::size_t J = k * k * cin, M = oh * ow;
    for (std::size_t s = 0; s < n; ++s) {
        const double* X = in.data() + s * h * w * cin;
        double* Y = out.data() + s * M * cout;
        for (std::size_t m = 0; m < M; ++m) std::copy_n(bias.data(), cout, Y + m * cout);
        if (k * cin < 16) {
            // Short kernel rows: one matrix product over the patch matrix.
            double* P = scratch(0, M * J).data();
            im2col(X, w, cin, k, stride, oh, ow, P);
            gemm_acc(M, cout, J, P, J, kernel.data(), cout, Y, cout);
            continue;
        }
        // Wide rows: walk the input in place, kx and ci are contiguous in
        // both the input row and the kernel.
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox)
                for (std::size_t ky = 0; ky < k; ++ky)
                    accumulate_row(X + ((oy * stride + ky) * w + ox * stride) * cin, kernel.data() + ky * k * cin * cout,
                                   k * cin, cout, Y + (oy * ow + ox) * cout);
    }
    return out;
}

void conv2d_backward(const Tensor& in, const Tensor& kernel, std::uint32_t stride, const Tensor& grad_out,
                     Tensor* grad_in, Tensor& grad_kernel, Tensor& grad_bias) {
    const std::size_t n = in.dim(0), h = in.dim(1), w = in.dim(2), cin = in.dim(3);
    const std::size_t k = kernel.dim(0), cout = kernel.dim(3);
    const std::size_t oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
    require(grad_out.shape() == Shape{n, oh, ow, cout}, ErrorCode::kShape,
            "conv2d backward: gradient shape " + shape_string(grad_out.shape()) + " does not match output");
    require(grad_kernel.shape() == kernel.shape() && grad_bias.size() == cout, ErrorCode::kShape,
            "conv2d backward: parameter gradient shape mismatch");

    const std::size_t J = k * k * cin, M = oh * ow;
    double* P = scratch(0, M * J).data();
    double* dP = grad_in ? scratch(1, M * J).data() : nullptr;
    std::vector<double> Wt;
    if (grad_in) {
        *grad_in = Tensor(in.shape());
        Wt.resize(J * cout);
        transpose(kernel.data(), J, cout, Wt.data());
    }
    double* dB = grad_bias.data();
    for (std::size_t s = 0; s < n; ++s) {
        const double* G = grad_out.data() + s * M * cout;
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t co = 0; co < cout; ++co) dB[co] += G[m * cout + co];
        im2col(in.data() + s * h * w * cin, w, cin, k, stride, oh, ow, P);
        gemm_tn_acc(M, cout, J, P, G, grad_kernel.data());
        if (!grad_in) continue;
        std::fill(dP, dP + M * J, 0.0);
        gemm_acc(M, J, cout, G, cout, Wt.data(), J, dP, J);
        // Scatter the patch gradients back onto the input.
        double* DX = grad_in->data() + s * h * w * cin;
        const std::size_t row = k * cin;
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double* p = dP + (oy * ow + ox) * J;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    double* d = DX + ((oy * stride + ky) * w + ox * stride) * cin;
                    for (std::size_t j = 0; j < row; ++j) d[j] += p[ky * row + j];
                }
            }
    }
}

Tensor maxpool2d_forward(const Tensor& in, std::uint32_t window, std::uint32_t stride,
                         std::vector<std::uint32_t>* argmax) {
    expect_rank(in, 4, "maxpool2d input");
    const std::size_t n = in.dim(0), h = in.dim(1), w = in.dim(2), c = in.dim(3);
    require(window >= 1 && stride >= 1 && h >= window && w >= window, ErrorCode::kShape,
            "maxpool2d: window larger than input " + shape_string(in.shape()));
    const std::size_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
    Tensor out({n, oh, ow, c});
    if (argmax) argmax->assign(out.size(), 0);
    std::size_t o = 0;
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t sbase = s * h * w * c;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                for (std::size_t ch = 0; ch < c; ++ch, ++o) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_i = 0;
                    for (std::size_t ky = 0; ky < window; ++ky) {
                        for (std::size_t kx = 0; kx < window; ++kx) {
                            std::size_t i = sbase + ((oy * stride + ky) * w + (ox * stride + kx)) * c + ch;
                            // Strict comparison: ties go to the first element in scan order.
                            if (in[i] > best) {
                                best = in[i];
                                best_i = i;
                            }
                        }
                    }
                    out[o] = best;
                    if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best_i);
                }
            }
        }
    }
    return out;
}

Tensor maxpool2d_backward(const Shape& in_shape, const std::vector<std::uint32_t>& argmax, const Tensor& grad_out) {
    require(argmax.size() == grad_out.size(), ErrorCode::kShape, "maxpool2d backward: argmax size mismatch");
    Tensor grad_in(in_shape);
    for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in[argmax[o]] += grad_out[o];
    return grad_in;
}

Tensor relu_forward(const Tensor& in) {
    Tensor out = in;
    for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& in, const Tensor& grad_out) {
    require(in.shape() == grad_out.shape(), ErrorCode::kShape, "relu backward: shape mismatch");
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!(in[i] > 0.0)) g[i] = 0.0;
    return g;
}

Tensor dense_forward(const Tensor& in, const Tensor& weights, const Tensor& bias) {
    expect_rank(in, 2, "dense input");
    expect_rank(weights, 2, "dense weights");
    const std::size_t n = in.dim(0), d = in.dim(1), u = weights.dim(1);
    require(weights.dim(0) == d && bias.size() == u, ErrorCode::kShape,
            "dense: weights " + shape_string(weights.shape()) + " incompatible with input " + shape_string(in.shape()));
    Tensor out({n, u});
    for (std::size_t s = 0; s < n; ++s) {
        double* y = out.data() + s * u;
        std::copy(bias.data(), bias.data() + u, y);
        const double* x = in.data() + s * d;
        for (std::size_t j = 0; j < d; ++j) {
            const double a = x[j];
            if (a == 0.0) continue;
            const double* wj = weights.data() + j * u;
            for (std::size_t k = 0; k < u; ++k) y[k] += a * wj[k];
        }
    }
    return out;
}

void dense_backward(const Tensor& in, const Tensor& weights, const Tensor& grad_out, Tensor* grad_in,
                    Tensor& grad_weights, Tensor& grad_bias) {
    const std::size_t n = in.dim(0), d = in.dim(1), u = weights.dim(1);
    require(grad_out.shape() == Shape{n, u}, ErrorCode::kShape, "dense backward: gradient shape mismatch");
    require(grad_weights.shape() == weights.shape() && grad_bias.size() == u, ErrorCode::kShape,
            "dense backward: parameter gradient shape mismatch");
    std::vector<double> wt;
    if (grad_in) {
        *grad_in = Tensor(in.shape());
        wt.resize(weights.size());
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < u; ++k) wt[k * d + j] = weights[j * u + k];
    }
    for (std::size_t s = 0; s < n; ++s) {
        const double* x = in.data() + s * d;
        const double* g = grad_out.data() + s * u;
        for (std::size_t k = 0; k < u; ++k) grad_bias[k] += g[k];
        for (std::size_t j = 0; j < d; ++j) {
            const double a = x[j];
            if (a == 0.0) continue;
            double* dw = grad_weights.data() + j * u;
            for (std::size_t k = 0; k < u; ++k) dw[k] += a * g[k];
        }
        if (grad_in) {
            double* dx = grad_in->data() + s * d;
            for (std::size_t k = 0; k < u; ++k) {
                const double gk = g[k];
                if (gk == 0.0) continue;
                const double* wk = wt.data() + k * d;
                for (std::size_t j = 0; j < d; ++j) dx[j] += gk * wk[j];
            }
        }
    }
}

Tensor softmax_forward(const Tensor& in) {
    expect_rank(in, 2, "softmax input");
    const std::size_t n = in.dim(0), k = in.dim(1);
    Tensor out(in.shape());
    for (std::size_t s = 0; s < n; ++s) {
        const double* x = in.data() + s * k;
        double* y = out.data() + s * k;
        double mx = *std::max_element(x, x + k);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += (y[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < k; ++j) y[j] /= sum;
    }
    return out;
}

Tensor softmax_backward(const Tensor& out, const Tensor& grad_out) {
    require(out.shape() == grad_out.shape(), ErrorCode::kShape, "softmax backward: shape mismatch");
    const std::size_t n = out.dim(0), k = out.dim(1);
    Tensor g(out.shape());
    for (std::size_t s = 0; s < n; ++s) {
        const double* y = out.data() + s * k;
        const double* go = grad_out.data() + s * k;
        double dot = 0.0;
        for (std::size_t j = 0; j < k; ++j) dot += go[j] * y[j];
        for (std::size_t j = 0; j < k; ++j) g[s * k + j] = y[j] * (go[j] - dot);
    }
    return g;
}

}  // namespace layers
}  // namespace cxr
