// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/protocol.hpp"

#include <cstring>

#include "cxr/error.hpp"

namespace cxr {

namespace {

[[noreturn]] void reject(Reason r, const std::string& msg) {
    fail(ErrorCode::kProtocol, std::string(reason_name(r)) + ": " + msg);
}

void expect_type(const Frame& f, MsgType t) {
    if (f.type != t)
        reject(Reason::kBadType,
               "expected " + std::string(msg_type_name(t)) + ", got " + std::string(msg_type_name(f.type)));
}

void write_id(ByteWriter& w, const std::string& id) {
    require(valid_scan_id(id), ErrorCode::kInvalidArgument, "invalid scan id '" + id + "'");
    w.u8(static_cast<std::uint8_t>(id.size()));
    w.text(id);
}

std::string read_id(ByteReader& r) {
    auto n = r.u8();
    auto id = r.text(n);
    if (!valid_scan_id(id)) reject(Reason::kBadPayload, "invalid scan id");
    return id;
}

Label read_verdict(ByteReader& r) {
    auto v = r.u8();
    if (v > 1) reject(Reason::kBadPayload, "verdict byte " + std::to_string(v));
    return static_cast<Label>(v);
}

Digest read_digest(ByteReader& r) {
    Digest d{};
    std::memcpy(d.data(), r.bytes(32).data(), 32);
    return d;
}

// Runs a payload parser, turning reader underruns into protocol errors.
template <typename F>
auto parse_payload(const Frame& f, F&& body) {
    ByteReader r(f.payload);
    try {
        auto out = body(r);
        if (!r.done()) reject(Reason::kBadPayload, "trailing bytes in " + std::string(msg_type_name(f.type)));
        return out;
    } catch (const Error& e) {
        if (e.code() == ErrorCode::kProtocol) throw;
        reject(Reason::kBadPayload, std::string(msg_type_name(f.type)) + ": " + e.what());
    }
}

void write_predict_req(ByteWriter& w, const PredictReq& m) {
    require(m.image.width() == 128 && m.image.height() == 128, ErrorCode::kInvalidArgument,
            "predict requests carry a 128x128 preprocessed image");
    w.bytes(m.image.pixels());
    Metadata md = m.metadata;
    md["id"] = m.scan_id;
    require(valid_scan_id(m.scan_id), ErrorCode::kInvalidArgument, "invalid scan id '" + m.scan_id + "'");
    w.bytes(encode_metadata(md));
}

PredictReq read_predict_req(ByteReader& r) {
    PredictReq m;
    auto px = r.bytes(kImageBytes);
    m.image = GrayImage(128, 128, std::vector<std::uint8_t>(px.begin(), px.end()));
    m.metadata = decode_metadata(r.bytes(kMetadataBytes));
    auto it = m.metadata.find("id");
    if (it == m.metadata.end() || !valid_scan_id(it->second)) reject(Reason::kBadPayload, "missing or invalid id");
    m.scan_id = it->second;
    m.metadata.erase(it);
    return m;
}

}  // namespace

std::string_view msg_type_name(MsgType t) {
    switch (t) {
    case MsgType::kPredictReq: return "PredictReq";
    case MsgType::kPredictResp: return "PredictResp";
    case MsgType::kConfirmReq: return "ConfirmReq";
    case MsgType::kAck: return "Ack";
    case MsgType::kUpdateCheck: return "UpdateCheck";
    case MsgType::kUpdateAvail: return "UpdateAvail";
    case MsgType::kUpdateNone: return "UpdateNone";
    case MsgType::kModelChunk: return "ModelChunk";
    case MsgType::kFlushBatch: return "FlushBatch";
    case MsgType::kError: return "Error";
    }
    return "Unknown";
}

std::string_view reason_name(Reason r) {
    switch (r) {
    case Reason::kBadMagic: return "bad-magic";
    case Reason::kBadVersion: return "bad-version";
    case Reason::kBadChecksum: return "bad-checksum";
    case Reason::kBadLength: return "bad-length";
    case Reason::kBadType: return "bad-type";
    case Reason::kBadPayload: return "bad-payload";
    case Reason::kOversized: return "oversized";
    case Reason::kNotFound: return "not-found";
    case Reason::kUnavailable: return "unavailable";
    case Reason::kInternal: return "internal";
    }
    return "unknown";
}

Bytes encode_frame(const Frame& f) {
    require(f.payload.size() <= kMaxPayload, ErrorCode::kProtocol, "oversized: payload exceeds 16 MiB");
    Bytes out;
    out.reserve(kFrameOverhead + f.payload.size());
    ByteWriter w(out);
    w.u8('C');
    w.u8('X');
    w.u8(kProtocolVersion);
    w.u8(static_cast<std::uint8_t>(f.type));
    w.u32(static_cast<std::uint32_t>(f.payload.size()));
    w.bytes(f.payload);
    w.u32(crc32(out));
    return out;
}

std::size_t frame_length(std::span<const std::uint8_t> header) {
    if (header.size() < kFrameHeaderSize) reject(Reason::kBadLength, "short header");
    if (header[0] != 'C' || header[1] != 'X') reject(Reason::kBadMagic, "frame does not start with CX");
    if (header[2] != kProtocolVersion) reject(Reason::kBadVersion, "version " + std::to_string(header[2]));
    std::uint32_t len = header[4] | (header[5] << 8) | (header[6] << 16) | (std::uint32_t{header[7]} << 24);
    if (len > kMaxPayload) reject(Reason::kOversized, "payload length " + std::to_string(len));
    return kFrameOverhead + len;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
    auto total = frame_length(bytes);
    if (bytes.size() != total)
        reject(Reason::kBadLength, "frame is " + std::to_string(bytes.size()) + " bytes, header says " +
                                       std::to_string(total));
    auto body = bytes.first(total - 4);
    ByteReader tail(bytes.subspan(total - 4));
    if (crc32(body) != tail.u32()) reject(Reason::kBadChecksum, "crc mismatch");
    auto type = bytes[3];
    if (type < 1 || type > 10) reject(Reason::kBadType, "message type " + std::to_string(type));
    Frame f;
    f.type = static_cast<MsgType>(type);
    f.payload.assign(body.begin() + kFrameHeaderSize, body.end());
    return f;
}

Label ConfirmReq::diagnosis() const {
    if (confirmed) return verdict;
    return verdict == Label::kPneumonia ? Label::kNormal : Label::kPneumonia;
}

Bytes encode_metadata(const Metadata& m) {
    std::string text;
    for (const auto& [k, v] : m) {
        require(!k.empty() && k.find_first_of("=\n") == std::string::npos && v.find('\n') == std::string::npos &&
                    v.find('\0') == std::string::npos,
                ErrorCode::kInvalidArgument, "metadata keys/values must be single-line and keys '='-free");
        text += k + "=" + v + "\n";
    }
    require(text.size() <= kMetadataBytes, ErrorCode::kInvalidArgument,
            "metadata is " + std::to_string(text.size()) + " bytes; the limit is " + std::to_string(kMetadataBytes));
    Bytes out(kMetadataBytes, 0);
    std::memcpy(out.data(), text.data(), text.size());
    return out;
}

Metadata decode_metadata(std::span<const std::uint8_t> block) {
    std::string text(block.begin(), block.end());
    auto end = text.find('\0');
    if (end != std::string::npos) {
        for (auto i = end; i < text.size(); ++i)
            if (text[i] != '\0') reject(Reason::kBadPayload, "metadata padding is not zero");
        text.resize(end);
    }
    Metadata m;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) reject(Reason::kBadPayload, "unterminated metadata line");
        auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0) reject(Reason::kBadPayload, "metadata line without key");
        m[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return m;
}

Frame make_frame(const PredictReq& m) {
    Frame f{MsgType::kPredictReq, {}};
    ByteWriter w(f.payload);
    write_predict_req(w, m);
    return f;
}

Frame make_frame(const PredictResp& m) {
    Frame f{MsgType::kPredictResp, {}};
    ByteWriter w(f.payload);
    w.f32(m.probability);
    w.u8(static_cast<std::uint8_t>(m.verdict));
    w.u8(m.flags);
    w.u32(m.model_version);
    w.f32(m.recall);
    w.f32(m.precision);
    write_id(w, m.scan_id);
    return f;
}

Frame make_frame(const ConfirmReq& m) {
    Frame f{MsgType::kConfirmReq, {}};
    ByteWriter w(f.payload);
    w.u8(static_cast<std::uint8_t>(m.verdict));
    w.u8(m.confirmed ? 1 : 0);
    write_id(w, m.scan_id);
    return f;
}

Frame make_ack(std::optional<std::uint64_t> offset) {
    Frame f{MsgType::kAck, {}};
    if (offset) ByteWriter(f.payload).u64(*offset);
    return f;
}

Frame make_update_check(const Digest& d) { return {MsgType::kUpdateCheck, Bytes(d.begin(), d.end())}; }

Frame make_frame(const UpdateAvail& m) {
    Frame f{MsgType::kUpdateAvail, {}};
    ByteWriter w(f.payload);
    w.bytes(m.digest);
    w.u64(m.size);
    w.u32(m.version);
    return f;
}

Frame make_update_none() { return {MsgType::kUpdateNone, {}}; }

Frame make_frame(const ModelChunk& m) {
    Frame f{MsgType::kModelChunk, {}};
    ByteWriter w(f.payload);
    w.bytes(m.digest);
    w.u64(m.offset);
    w.u64(m.total);
    w.bytes(m.data);
    return f;
}

Frame make_frame(const FlushBatch& m) {
    Frame f{MsgType::kFlushBatch, {}};
    ByteWriter w(f.payload);
    write_predict_req(w, m.request);
    w.f32(m.local_probability);
    w.u8(static_cast<std::uint8_t>(m.local_verdict));
    w.u32(m.local_version);
    return f;
}

Frame make_frame(const ErrorMsg& m) {
    Frame f{MsgType::kError, {}};
    ByteWriter w(f.payload);
    w.u16(static_cast<std::uint16_t>(m.reason));
    w.text(m.text.substr(0, 200));
    return f;
}

PredictReq parse_predict_req(const Frame& f) {
    expect_type(f, MsgType::kPredictReq);
    return parse_payload(f, [](ByteReader& r) { return read_predict_req(r); });
}

PredictResp parse_predict_resp(const Frame& f) {
    expect_type(f, MsgType::kPredictResp);
    return parse_payload(f, [](ByteReader& r) {
        PredictResp m;
        m.probability = r.f32();
        if (!(m.probability >= 0.0f && m.probability <= 1.0f)) reject(Reason::kBadPayload, "probability out of range");
        m.verdict = read_verdict(r);
        m.flags = r.u8();
        m.model_version = r.u32();
        m.recall = r.f32();
        m.precision = r.f32();
        m.scan_id = read_id(r);
        return m;
    });
}

ConfirmReq parse_confirm_req(const Frame& f) {
    expect_type(f, MsgType::kConfirmReq);
    return parse_payload(f, [](ByteReader& r) {
        ConfirmReq m;
        m.verdict = read_verdict(r);
        auto c = r.u8();
        if (c > 1) reject(Reason::kBadPayload, "confirmed byte " + std::to_string(c));
        m.confirmed = c == 1;
        m.scan_id = read_id(r);
        return m;
    });
}

std::optional<std::uint64_t> parse_ack(const Frame& f) {
    expect_type(f, MsgType::kAck);
    if (f.payload.empty()) return std::nullopt;
    return parse_payload(f, [](ByteReader& r) { return std::optional<std::uint64_t>(r.u64()); });
}

Digest parse_update_check(const Frame& f) {
    expect_type(f, MsgType::kUpdateCheck);
    return parse_payload(f, [](ByteReader& r) { return read_digest(r); });
}

UpdateAvail parse_update_avail(const Frame& f) {
    expect_type(f, MsgType::kUpdateAvail);
    return parse_payload(f, [](ByteReader& r) {
        UpdateAvail m;
        m.digest = read_digest(r);
        m.size = r.u64();
        m.version = r.u32();
        return m;
    });
}

ModelChunk parse_model_chunk(const Frame& f) {
    expect_type(f, MsgType::kModelChunk);
    return parse_payload(f, [](ByteReader& r) {
        ModelChunk m;
        m.digest = read_digest(r);
        m.offset = r.u64();
        m.total = r.u64();
        auto d = r.bytes(r.remaining());
        m.data.assign(d.begin(), d.end());
        if (m.total != 0 && m.offset + m.data.size() > m.total) reject(Reason::kBadPayload, "chunk beyond total");
        return m;
    });
}

FlushBatch parse_flush_batch(const Frame& f) {
    expect_type(f, MsgType::kFlushBatch);
    return parse_payload(f, [](ByteReader& r) {
        FlushBatch m;
        m.request = read_predict_req(r);
        m.local_probability = r.f32();
        m.local_verdict = read_verdict(r);
        m.local_version = r.u32();
        return m;
    });
}

ErrorMsg parse_error(const Frame& f) {
    expect_type(f, MsgType::kError);
    return parse_payload(f, [](ByteReader& r) {
        ErrorMsg m;
        m.reason = static_cast<Reason>(r.u16());
        m.text = r.text(r.remaining());
        return m;
    });
}

}  // namespace cxr
