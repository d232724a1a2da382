// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/compress.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <tuple>

#include "cxr/error.hpp"
#include "cxr/huffman.hpp"

namespace cxr {

namespace {

enum class BlockMode : std::uint8_t { kRaw = 0, kCoded = 1 };

bool valid_bits(std::uint32_t b) { return (b >= 1 && b <= 16) || b == kPassthroughBits; }

struct TensorPlan {
    std::size_t prune_count = 0;
    std::uint32_t bits = kPassthroughBits;
};

std::vector<TensorPlan> plan(const ModelArtifact& m, const CompressionConfig& cfg) {
    std::vector<TensorPlan> out(m.params().size());
    std::vector<std::size_t> weights;
    for (std::size_t i = 0; i < m.layers().size(); ++i) {
        int off = m.param_offset(i);
        if (off < 0) continue;
        auto bits = m.layers()[i].kind == LayerKind::kConv2d ? cfg.conv_bits : cfg.dense_bits;
        const auto n = m.params()[off].size();
        out[off] = {static_cast<std::size_t>(std::floor(cfg.sparsity * double(n))), bits};
        if (cfg.compress_biases) out[off + 1] = {0, bits};
        weights.push_back(static_cast<std::size_t>(off));
    }
    if (cfg.per_tensor_sparsity || cfg.sparsity == 0.0) return out;

    // Model-wide: rank every weight by magnitude, ties by tensor then index.
    struct Entry {
        float mag;
        std::uint32_t tensor;
        std::uint32_t index;
    };
    std::vector<Entry> all;
    for (std::size_t t = 0; t < weights.size(); ++t) {
        const auto& w = m.params()[weights[t]];
        for (std::size_t j = 0; j < w.size(); ++j)
            all.push_back({static_cast<float>(std::abs(w[j])), static_cast<std::uint32_t>(t),
                           static_cast<std::uint32_t>(j)});
    }
    const auto k = static_cast<std::size_t>(std::floor(cfg.sparsity * double(all.size())));
    auto before = [](const Entry& a, const Entry& b) {
        return std::tie(a.mag, a.tensor, a.index) < std::tie(b.mag, b.tensor, b.index);
    };
    std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), before);
    for (std::size_t off : weights) out[off].prune_count = 0;
    for (std::size_t i = 0; i < k; ++i) ++out[weights[all[i].tensor]].prune_count;
    return out;
}

double nearest_index(const std::vector<double>& c, double v, std::uint32_t& idx) {
    // c is ascending
    auto it = std::lower_bound(c.begin(), c.end(), v);
    std::size_t hi = std::min<std::size_t>(it - c.begin(), c.size() - 1);
    std::size_t best = hi;
    if (hi > 0 && std::abs(v - c[hi - 1]) <= std::abs(v - c[hi])) best = hi - 1;
    idx = static_cast<std::uint32_t>(best);
    return c[best];
}

void write_gaps(ByteWriter& w, const std::vector<bool>& mask) {
    // Alternating run lengths, starting with a (possibly empty) run of pruned
    // entries.
    std::vector<std::uint64_t> runs;
    bool state = false;
    std::uint64_t run = 0;
    for (bool b : mask) {
        if (b == state) {
            ++run;
        } else {
            runs.push_back(run);
            state = b;
            run = 1;
        }
    }
    runs.push_back(run);
    w.varint(runs.size());
    for (auto r : runs) w.varint(r);
}

std::vector<bool> read_gaps(ByteReader& r, std::size_t n) {
    auto count = r.varint();
    require(count <= n + 1, ErrorCode::kFormat, "bitmap run count exceeds tensor size");
    std::vector<bool> mask;
    mask.reserve(n);
    bool state = false;
    for (std::uint64_t i = 0; i < count; ++i) {
        auto run = r.varint();
        require(run <= n - mask.size(), ErrorCode::kFormat, "bitmap runs overflow tensor");
        mask.insert(mask.end(), run, state);
        state = !state;
    }
    require(mask.size() == n, ErrorCode::kFormat, "bitmap runs do not cover tensor");
    return mask;
}

struct EncodedTensor {
    Tensor reconstructed;
    TensorReport report;
};

EncodedTensor encode_tensor(ByteWriter& w, const Tensor& t, const TensorPlan& p) {
    EncodedTensor out;
    out.reconstructed = Tensor(t.shape());
    out.report.elements = t.size();
    out.report.bits = p.bits;
    auto start = w.size();

    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));

    if (p.bits == kPassthroughBits && p.prune_count == 0) {
        w.u8(static_cast<std::uint8_t>(BlockMode::kRaw));
        for (std::size_t i = 0; i < t.size(); ++i) {
            float f = static_cast<float>(t[i]);
            w.f32(f);
            out.reconstructed[i] = f;
        }
        out.report.survivors = t.size();
    } else {
        auto pr = prune_smallest(t, p.prune_count);
        std::vector<double> survivors;
        for (std::size_t i = 0; i < t.size(); ++i)
            if (pr.mask[i]) survivors.push_back(pr.weights[i]);
        out.report.survivors = survivors.size();

        w.u8(static_cast<std::uint8_t>(BlockMode::kCoded));
        w.u8(static_cast<std::uint8_t>(p.bits));
        write_gaps(w, pr.mask);

        std::vector<float> codebook;
        std::vector<std::uint32_t> indices;
        if (p.bits == kPassthroughBits) {
            for (double v : survivors) codebook.push_back(static_cast<float>(v));
        } else if (!survivors.empty()) {
            auto q = quantize(survivors, p.bits);
            codebook = std::move(q.codebook);
            indices = std::move(q.indices);
        }
        w.u32(static_cast<std::uint32_t>(codebook.size()));
        for (float f : codebook) w.f32(f);
        out.report.codebook_size = p.bits == kPassthroughBits ? 0 : codebook.size();

        if (p.bits != kPassthroughBits && !indices.empty()) {
            auto hs = huffman_encode(indices, codebook.size());
            w.bytes(hs.table.lengths);
            w.varint(hs.bit_count);
            w.bytes(hs.bits);
        }
        std::size_t k = 0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (!pr.mask[i]) continue;
            out.reconstructed[i] = p.bits == kPassthroughBits ? codebook[k] : codebook[indices[k]];
            ++k;
        }
    }
    double se = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) se += (t[i] - out.reconstructed[i]) * (t[i] - out.reconstructed[i]);
    out.report.mse = t.size() ? se / double(t.size()) : 0.0;
    out.report.encoded_bytes = w.size() - start;
    return out;
}

void decode_tensor(ByteReader& r, Tensor& t) {
    auto rank = r.u32();
    require(rank <= 8, ErrorCode::kFormat, "implausible tensor rank");
    Shape s;
    for (std::uint32_t i = 0; i < rank; ++i) s.push_back(r.u32());
    require(s == t.shape(), ErrorCode::kFormat,
            "compressed block shape " + shape_string(s) + " does not match architecture " + shape_string(t.shape()));
    auto mode = r.u8();
    if (mode == static_cast<std::uint8_t>(BlockMode::kRaw)) {
        for (auto& v : t.values()) v = r.f32();
        return;
    }
    require(mode == static_cast<std::uint8_t>(BlockMode::kCoded), ErrorCode::kFormat,
            "unknown block mode " + std::to_string(mode));
    auto bits = r.u8();
    require(valid_bits(bits), ErrorCode::kFormat, "invalid codebook bits " + std::to_string(bits));
    auto mask = read_gaps(r, t.size());
    auto survivors = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
    auto k = r.u32();
    require(k <= (bits == kPassthroughBits ? survivors : (std::size_t{1} << bits)), ErrorCode::kFormat,
            "codebook larger than its index width");
    std::vector<float> codebook(k);
    for (auto& f : codebook) f = r.f32();

    std::vector<std::uint32_t> indices;
    if (bits == kPassthroughBits) {
        require(k == survivors, ErrorCode::kFormat, "raw survivor count mismatch");
        indices.resize(k);
        std::iota(indices.begin(), indices.end(), 0u);
    } else if (survivors > 0) {
        require(k > 0, ErrorCode::kFormat, "empty codebook for surviving weights");
        HuffmanTable table;
        auto lengths = r.bytes(k);
        table.lengths.assign(lengths.begin(), lengths.end());
        auto bit_count = r.varint();
        require(bit_count <= std::uint64_t{r.remaining()} * 8, ErrorCode::kFormat, "huffman stream truncated");
        auto stream = r.bytes(static_cast<std::size_t>((bit_count + 7) / 8));
        indices = huffman_decode(stream, bit_count, table, survivors);
    }
    std::size_t j = 0;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = mask[i] ? codebook[indices[j++]] : 0.0;
}

}  // namespace

void CompressionConfig::validate() const {
    require(sparsity >= 0.0 && sparsity < 1.0, ErrorCode::kInvalidArgument, "sparsity must be in [0, 1)");
    require(valid_bits(conv_bits) && valid_bits(dense_bits), ErrorCode::kInvalidArgument,
            "codebook bits must be in [1, 16] (or 32 for passthrough)");
}

CompressionConfig CompressionConfig::passthrough() {
    CompressionConfig c;
    c.sparsity = 0.0;
    c.conv_bits = kPassthroughBits;
    c.dense_bits = kPassthroughBits;
    return c;
}

PruneResult prune(const Tensor& weights, double sparsity) {
    require(sparsity >= 0.0 && sparsity < 1.0, ErrorCode::kInvalidArgument, "sparsity must be in [0, 1)");
    return prune_smallest(weights, static_cast<std::size_t>(std::floor(sparsity * double(weights.size()))));
}

PruneResult prune_smallest(const Tensor& weights, std::size_t k) {
    const std::size_t n = weights.size();
    require(k <= n, ErrorCode::kInvalidArgument, "cannot prune more weights than the tensor holds");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(weights[a]) < std::abs(weights[b]); });
    PruneResult out{weights, std::vector<bool>(n, true)};
    for (std::size_t i = 0; i < k; ++i) {
        out.weights[order[i]] = 0.0;
        out.mask[order[i]] = false;
    }
    return out;
}

Quantized quantize(std::span<const double> values, std::uint32_t bits) {
    require(bits >= 1 && bits <= 16, ErrorCode::kInvalidArgument, "codebook bits must be in [1, 16]");
    Quantized q;
    if (values.empty()) return q;
    const std::size_t k_max = std::size_t{1} << bits;

    std::vector<float> distinct;
    distinct.reserve(values.size());
    for (double v : values) distinct.push_back(static_cast<float>(v));
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    std::vector<double> centroids;
    if (distinct.size() <= k_max) {
        centroids.assign(distinct.begin(), distinct.end());
    } else {
        std::vector<double> sorted(values.begin(), values.end());
        std::sort(sorted.begin(), sorted.end());
        const double lo = sorted.front();
        const double hi = sorted.back();
        centroids.resize(k_max);
        for (std::size_t j = 0; j < k_max; ++j) centroids[j] = lo + (hi - lo) * double(j) / double(k_max - 1);

        // Lloyd iterations on sorted data: each cluster is a contiguous range
        // bounded by centroid midpoints.
        std::vector<double> prefix(sorted.size() + 1, 0.0);
        for (std::size_t i = 0; i < sorted.size(); ++i) prefix[i + 1] = prefix[i] + sorted[i];
        for (int iter = 0; iter < 100; ++iter) {
            std::vector<double> next;
            next.reserve(centroids.size());
            std::size_t begin = 0;
            for (std::size_t j = 0; j < centroids.size(); ++j) {
                std::size_t end = sorted.size();
                if (j + 1 < centroids.size()) {
                    double mid = 0.5 * (centroids[j] + centroids[j + 1]);
                    end = static_cast<std::size_t>(std::upper_bound(sorted.begin() + begin, sorted.end(), mid) -
                                                   sorted.begin());
                }
                if (end > begin) next.push_back((prefix[end] - prefix[begin]) / double(end - begin));
                begin = end;
            }
            bool same = next == centroids;
            centroids = std::move(next);
            if (same) break;
        }
    }
    for (double& c : centroids) c = static_cast<float>(c);
    std::sort(centroids.begin(), centroids.end());
    centroids.erase(std::unique(centroids.begin(), centroids.end()), centroids.end());

    q.indices.resize(values.size());
    std::vector<bool> used(centroids.size(), false);
    for (std::size_t i = 0; i < values.size(); ++i) {
        nearest_index(centroids, values[i], q.indices[i]);
        used[q.indices[i]] = true;
    }
    // Drop centroids no value maps to and renumber.
    std::vector<std::uint32_t> remap(centroids.size(), 0);
    for (std::size_t j = 0; j < centroids.size(); ++j) {
        if (!used[j]) continue;
        remap[j] = static_cast<std::uint32_t>(q.codebook.size());
        q.codebook.push_back(static_cast<float>(centroids[j]));
    }
    for (auto& idx : q.indices) idx = remap[idx];
    return q;
}

namespace {

Bytes encode_model(const ModelArtifact& artifact, const CompressionConfig& cfg, ModelArtifact& reconstructed,
                   std::vector<TensorReport>& reports) {
    cfg.validate();
    require(artifact.sealed(), ErrorCode::kInvalidArgument, "only sealed artifacts can be compressed");
    auto plans = plan(artifact, cfg);

    Bytes body;
    ByteWriter bw(body);
    reconstructed = artifact;
    auto& rp = reconstructed.mutable_params();
    for (std::size_t i = 0; i < artifact.params().size(); ++i) {
        auto enc = encode_tensor(bw, artifact.params()[i], plans[i]);
        enc.report.index = i;
        rp[i] = std::move(enc.reconstructed);
        reports.push_back(enc.report);
    }
    reconstructed.seal();

    Bytes out;
    ByteWriter w(out);
    w.bytes({reinterpret_cast<const std::uint8_t*>(kCompressedMagic), 4});
    w.u16(kCompressedFormatVersion);
    w.u16(0);
    w.bytes(artifact.digest());
    w.bytes(reconstructed.digest());
    artifact.write_header(w);
    w.u32(static_cast<std::uint32_t>(artifact.params().size()));
    w.bytes(body);
    w.bytes(sha256(out));
    return out;
}

}  // namespace

ModelArtifact prune_and_quantize(const ModelArtifact& artifact, const CompressionConfig& cfg) {
    ModelArtifact rec;
    std::vector<TensorReport> reports;
    encode_model(artifact, cfg, rec, reports);
    return rec;
}

CompressedModel compress_model(const ModelArtifact& artifact, const CompressionConfig& cfg) {
    CompressedModel cm;
    ModelArtifact rec;
    cm.bytes = encode_model(artifact, cfg, rec, cm.tensors);
    cm.original_digest = artifact.digest();
    cm.reconstructed_digest = rec.digest();
    cm.compressed_digest = compressed_digest_of(cm.bytes);
    cm.original_size = artifact.serialize().size();
    cm.compressed_size = cm.bytes.size();

    auto check = decompress_model(cm.bytes);
    require(check.model.digest() == cm.reconstructed_digest, ErrorCode::kCorrupt,
            "compressed model failed its decode self-check");
    return cm;
}

bool is_compressed_model(std::span<const std::uint8_t> bytes) {
    return bytes.size() >= 4 && std::memcmp(bytes.data(), kCompressedMagic, 4) == 0;
}

Digest compressed_digest_of(std::span<const std::uint8_t> bytes) {
    require(bytes.size() >= 32, ErrorCode::kFormat, "compressed model too short");
    Digest d{};
    std::memcpy(d.data(), bytes.data() + bytes.size() - 32, 32);
    return d;
}

DecodedModel decompress_model(std::span<const std::uint8_t> bytes) {
    require(bytes.size() > 8 + 64 + 32, ErrorCode::kFormat, "compressed model too short");
    auto body = bytes.first(bytes.size() - 32);
    DecodedModel out;
    out.compressed_digest = compressed_digest_of(bytes);
    require(sha256(body) == out.compressed_digest, ErrorCode::kCorrupt, "compressed model digest mismatch");

    ByteReader r(body);
    auto magic = r.bytes(4);
    require(std::memcmp(magic.data(), kCompressedMagic, 4) == 0, ErrorCode::kFormat, "bad compressed model magic");
    auto fmt = r.u16();
    require(fmt == kCompressedFormatVersion, ErrorCode::kFormat,
            "unsupported compressed format version " + std::to_string(fmt));
    r.u16();
    Digest expected{};
    std::memcpy(out.original_digest.data(), r.bytes(32).data(), 32);
    std::memcpy(expected.data(), r.bytes(32).data(), 32);
    out.model = ModelArtifact::read_header(r);
    auto count = r.u32();
    require(count == out.model.params().size(), ErrorCode::kFormat, "tensor count does not match architecture");
    auto& params = out.model.mutable_params();
    for (auto& p : params) decode_tensor(r, p);
    require(r.done(), ErrorCode::kFormat, "trailing bytes in compressed model");
    out.model.seal();
    require(out.model.digest() == expected, ErrorCode::kCorrupt, "decompressed model digest mismatch");
    return out;
}

}  // namespace cxr
