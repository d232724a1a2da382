// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "cxr/error.hpp"
#include "cxr/random.hpp"

namespace cxr {

namespace {

constexpr double kProbEpsilon = 1e-7;

Shape with_batch(std::size_t n, const Shape& per_sample) {
    Shape s{n};
    s.insert(s.end(), per_sample.begin(), per_sample.end());
    return s;
}

}  // namespace

bool ValMetrics::operator==(const ValMetrics& o) const {
    return std::bit_cast<std::uint64_t>(loss) == std::bit_cast<std::uint64_t>(o.loss) && accuracy == o.accuracy &&
           precision == o.precision && recall == o.recall;
}

ModelArtifact::ModelArtifact(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
    build();
}

void ModelArtifact::build() {
    require(input_shape_.size() == 3, ErrorCode::kShape, "model input must be (h, w, c)");
    layer_shapes_.clear();
    param_offset_.clear();
    params_.clear();
    Shape cur = input_shape_;
    for (const auto& spec : layers_) {
        auto pshapes = spec.param_shapes(cur);
        param_offset_.push_back(pshapes.empty() ? -1 : static_cast<int>(params_.size()));
        for (auto& ps : pshapes) params_.emplace_back(ps);
        cur = spec.output_shape(cur);
        layer_shapes_.push_back(cur);
    }
    sealed_ = false;
}

ModelArtifact ModelArtifact::reference(std::uint64_t seed, std::uint32_t side) {
    ModelArtifact m({side, side, 1}, {
                                         LayerSpec::conv2d(16, 3),
                                         LayerSpec::relu(),
                                         LayerSpec::maxpool2d(2),
                                         LayerSpec::conv2d(32, 3),
                                         LayerSpec::relu(),
                                         LayerSpec::maxpool2d(2),
                                         LayerSpec::conv2d(64, 3),
                                         LayerSpec::relu(),
                                         LayerSpec::maxpool2d(2),
                                         LayerSpec::flatten(),
                                         LayerSpec::dense(64),
                                         LayerSpec::relu(),
                                         LayerSpec::dense(2),
                                         LayerSpec::softmax(),
                                     });
    m.init_weights(seed);
    return m;
}

std::vector<Tensor>& ModelArtifact::mutable_params() {
    sealed_ = false;
    return params_;
}

std::size_t ModelArtifact::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

void ModelArtifact::init_weights(std::uint64_t seed) {
    sealed_ = false;
    for (std::size_t i = 0; i < params_.size(); i += 2) {
        Tensor& kernel = params_[i];
        Tensor& bias = params_[i + 1];
        // Fan-in: every kernel dimension except the last (output) one.
        std::size_t fan_in = kernel.size() / kernel.shape().back();
        double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        Rng rng(Rng::mix(seed, i));
        for (auto& v : kernel.values()) v = rng.uniform(-limit, limit);
        bias.fill(0.0);
    }
}

void ModelArtifact::set_version(std::uint64_t v) {
    version_ = v;
    sealed_ = false;
}

void ModelArtifact::set_parent_digest(const Digest& d) {
    parent_ = d;
    sealed_ = false;
}

void ModelArtifact::set_metrics(const ValMetrics& m) {
    metrics_ = m;
    sealed_ = false;
}

void ModelArtifact::seal() {
    for (auto& p : params_)
        for (auto& v : p.values()) v = static_cast<double>(static_cast<float>(v));
    auto bytes = serialize();
    std::memcpy(digest_.data(), bytes.data() + bytes.size() - digest_.size(), digest_.size());
    sealed_ = true;
}

const Digest& ModelArtifact::digest() const {
    require(sealed_, ErrorCode::kInvalidArgument, "model artifact is not sealed");
    return digest_;
}

void ModelArtifact::write_header(ByteWriter& w) const {
    w.bytes({reinterpret_cast<const std::uint8_t*>(kModelMagic), 4});
    w.u16(kModelFormatVersion);
    w.u16(0);
    w.u32(static_cast<std::uint32_t>(layers_.size()));
    for (auto d : input_shape_) w.u32(static_cast<std::uint32_t>(d));
    w.u64(version_);
    w.bytes(parent_);
    w.f64(metrics_.loss);
    w.f64(metrics_.accuracy);
    w.f64(metrics_.precision);
    w.f64(metrics_.recall);
    for (const auto& l : layers_) {
        w.u8(static_cast<std::uint8_t>(l.kind));
        w.u8(0);
        w.u16(0);
        w.u32(l.units);
        w.u32(l.kernel);
        w.u32(l.stride);
    }
}

ModelArtifact ModelArtifact::read_header(ByteReader& r) {
    auto magic = r.bytes(4);
    require(std::memcmp(magic.data(), kModelMagic, 4) == 0, ErrorCode::kFormat, "bad model magic");
    auto fmt = r.u16();
    require(fmt == kModelFormatVersion, ErrorCode::kFormat, "unsupported model format version " + std::to_string(fmt));
    r.u16();
    auto layer_count = r.u32();
    require(layer_count <= 1024, ErrorCode::kFormat, "implausible layer count");
    Shape input{r.u32(), r.u32(), r.u32()};
    auto version = r.u64();
    Digest parent{};
    auto pb = r.bytes(parent.size());
    std::memcpy(parent.data(), pb.data(), parent.size());
    ValMetrics m;
    m.loss = r.f64();
    m.accuracy = r.f64();
    m.precision = r.f64();
    m.recall = r.f64();
    std::vector<LayerSpec> layers;
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        LayerSpec s;
        auto kind = r.u8();
        require(kind >= 1 && kind <= 6, ErrorCode::kFormat, "unknown layer kind " + std::to_string(kind));
        s.kind = static_cast<LayerKind>(kind);
        r.u8();
        r.u16();
        s.units = r.u32();
        s.kernel = r.u32();
        s.stride = r.u32();
        layers.push_back(s);
    }
    ModelArtifact a;
    try {
        a = ModelArtifact(std::move(input), std::move(layers));
    } catch (const Error& e) {
        fail(ErrorCode::kFormat, std::string("invalid architecture: ") + e.what());
    }
    a.version_ = version;
    a.parent_ = parent;
    a.metrics_ = m;
    return a;
}

Bytes ModelArtifact::serialize() const {
    Bytes out;
    out.reserve(256 + parameter_count() * 4);
    ByteWriter w(out);
    write_header(w);
    for (const auto& p : params_) {
        w.u32(static_cast<std::uint32_t>(p.rank()));
        for (auto d : p.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (double v : p.values()) w.f32(static_cast<float>(v));
    }
    auto d = sha256(out);
    w.bytes(d);
    return out;
}

ModelArtifact ModelArtifact::deserialize(std::span<const std::uint8_t> bytes) {
    require(bytes.size() > 32, ErrorCode::kFormat, "model file too short");
    auto body = bytes.first(bytes.size() - 32);
    Digest stored{};
    std::memcpy(stored.data(), bytes.data() + body.size(), 32);
    require(sha256(body) == stored, ErrorCode::kCorrupt, "model digest mismatch");

    ByteReader r(body);
    ModelArtifact a = read_header(r);
    for (auto& p : a.params_) {
        auto rank = r.u32();
        Shape s;
        for (std::uint32_t i = 0; i < rank; ++i) s.push_back(r.u32());
        require(s == p.shape(), ErrorCode::kFormat,
                "weight block shape " + shape_string(s) + " does not match architecture " + shape_string(p.shape()));
        for (auto& v : p.values()) v = r.f32();
    }
    require(r.done(), ErrorCode::kFormat, "trailing bytes in model file");
    a.digest_ = stored;
    a.sealed_ = true;
    return a;
}

void ModelArtifact::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

ModelArtifact ModelArtifact::load(const std::filesystem::path& path) {
    try {
        return deserialize(read_file(path));
    } catch (const Error& e) {
        fail(e.code(), path.string() + ": " + e.what());
    }
}

namespace {

struct Trace {
    std::vector<Tensor> inputs;  // input to each layer
    std::vector<std::vector<std::uint32_t>> argmax;
};

Tensor run_forward(const ModelArtifact& model, const Tensor& batch, Trace* trace) {
    require(batch.rank() == 4, ErrorCode::kShape, "batch must be (n, h, w, c), got " + shape_string(batch.shape()));
    Shape per_sample(batch.shape().begin() + 1, batch.shape().end());
    require(per_sample == model.input_shape(), ErrorCode::kShape,
            "batch shape " + shape_string(batch.shape()) + " does not match model input " +
                shape_string(model.input_shape()));
    const std::size_t n = batch.dim(0);
    const auto& specs = model.layers();
    const auto& params = model.params();
    if (trace) {
        trace->inputs.clear();
        trace->argmax.assign(specs.size(), {});
    }
    Tensor cur = batch;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        Tensor next;
        switch (spec.kind) {
        case LayerKind::kConv2d: {
            int p = model.param_offset(i);
            next = layers::conv2d_forward(cur, params[p], params[p + 1], spec.stride);
            break;
        }
        case LayerKind::kMaxPool2d:
            next = layers::maxpool2d_forward(cur, spec.kernel, spec.stride, trace ? &trace->argmax[i] : nullptr);
            break;
        case LayerKind::kRelu: next = layers::relu_forward(cur); break;
        case LayerKind::kFlatten: next = cur.reshaped(with_batch(n, model.layer_shapes()[i])); break;
        case LayerKind::kDense: {
            int p = model.param_offset(i);
            next = layers::dense_forward(cur, params[p], params[p + 1]);
            break;
        }
        case LayerKind::kSoftmax: next = layers::softmax_forward(cur); break;
        }
        if (trace) trace->inputs.push_back(std::move(cur));
        cur = std::move(next);
    }
    return cur;
}

void check_onehot(const Tensor& pred, const Tensor& onehot) {
    require(pred.rank() == 2 && pred.shape() == onehot.shape(), ErrorCode::kShape,
            "prediction " + shape_string(pred.shape()) + " and target " + shape_string(onehot.shape()) +
                " shapes differ");
    require(pred.dim(0) > 0, ErrorCode::kShape, "empty batch");
}

}  // namespace

Tensor forward(const ModelArtifact& model, const Tensor& batch) { return run_forward(model, batch, nullptr); }

double loss_categorical_crossentropy(const Tensor& pred, const Tensor& onehot) {
    check_onehot(pred, onehot);
    const std::size_t n = pred.dim(0);
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (onehot[i] == 0.0) continue;
        double p = std::clamp(pred[i], kProbEpsilon, 1.0 - kProbEpsilon);
        total -= onehot[i] * std::log(p);
    }
    return total / static_cast<double>(n);
}

Gradients backward(const ModelArtifact& model, const Tensor& batch, const Tensor& onehot) {
    Trace trace;
    Tensor pred = run_forward(model, batch, &trace);
    check_onehot(pred, onehot);
    const std::size_t n = pred.dim(0);

    Gradients g;
    g.loss = loss_categorical_crossentropy(pred, onehot);
    for (const auto& p : model.params()) g.params.emplace_back(p.shape());

    Tensor grad(pred.shape());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double p = pred[i];
        // The clamp has zero derivative outside [eps, 1 - eps].
        if (onehot[i] != 0.0 && p > kProbEpsilon && p < 1.0 - kProbEpsilon)
            grad[i] = -onehot[i] / p / static_cast<double>(n);
    }

    const auto& specs = model.layers();
    const auto& params = model.params();
    for (std::size_t li = specs.size(); li-- > 0;) {
        const auto& spec = specs[li];
        const Tensor& in = trace.inputs[li];
        const bool need_input_grad = li > 0;
        switch (spec.kind) {
        case LayerKind::kConv2d: {
            int p = model.param_offset(li);
            Tensor gin;
            layers::conv2d_backward(in, params[p], spec.stride, grad, need_input_grad ? &gin : nullptr, g.params[p],
                                    g.params[p + 1]);
            grad = std::move(gin);
            break;
        }
        case LayerKind::kMaxPool2d: grad = layers::maxpool2d_backward(in.shape(), trace.argmax[li], grad); break;
        case LayerKind::kRelu: grad = layers::relu_backward(in, grad); break;
        case LayerKind::kFlatten: grad = grad.reshaped(in.shape()); break;
        case LayerKind::kDense: {
            int p = model.param_offset(li);
            Tensor gin;
            layers::dense_backward(in, params[p], grad, need_input_grad ? &gin : nullptr, g.params[p],
                                   g.params[p + 1]);
            grad = std::move(gin);
            break;
        }
        case LayerKind::kSoftmax: {
            Tensor out = li + 1 < specs.size() ? trace.inputs[li + 1] : pred;
            grad = layers::softmax_backward(out, grad);
            break;
        }
        }
        if (!need_input_grad) break;
    }
    g.predictions = std::move(pred);
    return g;
}

}  // namespace cxr
