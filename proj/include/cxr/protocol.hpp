// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cxr/binary_io.hpp"
#include "cxr/dataset.hpp"
#include "cxr/digest.hpp"
#include "cxr/imaging.hpp"

namespace cxr {

// Frame layout, all integers little-endian:
//
//   0  'C' 'X'
//   2  version (1)
//   3  msg_type
//   4  payload_len (u32)
//   8  payload
//   .  crc32 over bytes [0, 8 + payload_len)
enum class MsgType : std::uint8_t {
    kPredictReq = 1,
    kPredictResp = 2,
    kConfirmReq = 3,
    kAck = 4,
    kUpdateCheck = 5,
    kUpdateAvail = 6,
    kUpdateNone = 7,
    kModelChunk = 8,
    kFlushBatch = 9,
    kError = 10,
};

std::string_view msg_type_name(MsgType t);

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 8;
inline constexpr std::size_t kFrameOverhead = kFrameHeaderSize + 4;
inline constexpr std::size_t kMaxPayload = 16u << 20;
inline constexpr std::size_t kImageBytes = 128 * 128;
// Fixed per-request metadata allowance; PredictReq pads to it exactly.
inline constexpr std::size_t kMetadataBytes = 1024;
inline constexpr std::size_t kChunkSize = 8 * 1024;

struct Frame {
    MsgType type = MsgType::kAck;
    Bytes payload;

    bool operator==(const Frame&) const = default;
};

Bytes encode_frame(const Frame& f);
// Decodes exactly one frame occupying all of `bytes`.
Frame decode_frame(std::span<const std::uint8_t> bytes);
// Total frame length announced by a header, after validating magic, version
// and the payload bound. Needs kFrameHeaderSize bytes.
std::size_t frame_length(std::span<const std::uint8_t> header);

// Why a frame was rejected; carried in Error frames and protocol errors.
enum class Reason : std::uint16_t {
    kBadMagic = 1,
    kBadVersion = 2,
    kBadChecksum = 3,
    kBadLength = 4,
    kBadType = 5,
    kBadPayload = 6,
    kOversized = 7,
    kNotFound = 8,
    kUnavailable = 9,
    kInternal = 10,
};

std::string_view reason_name(Reason r);

// Metadata travels as key=value lines in a zero-padded 1 KiB block.
using Metadata = std::map<std::string, std::string>;

struct PredictReq {
    std::string scan_id;
    GrayImage image;  // 128x128, preprocessed
    Metadata metadata;

    bool operator==(const PredictReq&) const = default;
};

inline constexpr std::uint8_t kFlagUpdateAvailable = 0x01;
inline constexpr std::uint8_t kFlagDuplicate = 0x02;

struct PredictResp {
    std::string scan_id;
    float probability = 0.0f;  // of Pneumonia
    Label verdict = Label::kNormal;
    std::uint8_t flags = 0;
    std::uint32_t model_version = 0;
    float recall = 0.0f;
    float precision = 0.0f;

    bool operator==(const PredictResp&) const = default;
};

struct ConfirmReq {
    std::string scan_id;
    Label verdict = Label::kNormal;  // the verdict shown to the user
    bool confirmed = false;

    // Confirmed keeps the verdict; rejected flips it.
    Label diagnosis() const;
    bool operator==(const ConfirmReq&) const = default;
};

struct UpdateAvail {
    Digest digest{};
    std::uint64_t size = 0;
    std::uint32_t version = 0;

    bool operator==(const UpdateAvail&) const = default;
};

// Request form: empty data, total 0, "send from offset". Response form:
// one slice of the compressed model.
struct ModelChunk {
    Digest digest{};
    std::uint64_t offset = 0;
    std::uint64_t total = 0;
    Bytes data;

    bool operator==(const ModelChunk&) const = default;
};

// A scan that was answered locally while offline, uploaded later.
struct FlushBatch {
    PredictReq request;
    float local_probability = 0.0f;
    Label local_verdict = Label::kNormal;
    std::uint32_t local_version = 0;

    bool operator==(const FlushBatch&) const = default;
};

struct ErrorMsg {
    Reason reason = Reason::kInternal;
    std::string text;

    bool operator==(const ErrorMsg&) const = default;
};

Bytes encode_metadata(const Metadata& m);
Metadata decode_metadata(std::span<const std::uint8_t> block);

Frame make_frame(const PredictReq& m);
Frame make_frame(const PredictResp& m);
Frame make_frame(const ConfirmReq& m);
Frame make_ack(std::optional<std::uint64_t> offset = std::nullopt);
Frame make_update_check(const Digest& d);
Frame make_frame(const UpdateAvail& m);
Frame make_update_none();
Frame make_frame(const ModelChunk& m);
Frame make_frame(const FlushBatch& m);
Frame make_frame(const ErrorMsg& m);

// Each parser checks the frame type and throws a protocol error on a
// malformed payload.
PredictReq parse_predict_req(const Frame& f);
PredictResp parse_predict_resp(const Frame& f);
ConfirmReq parse_confirm_req(const Frame& f);
std::optional<std::uint64_t> parse_ack(const Frame& f);
Digest parse_update_check(const Frame& f);
UpdateAvail parse_update_avail(const Frame& f);
ModelChunk parse_model_chunk(const Frame& f);
FlushBatch parse_flush_batch(const Frame& f);
ErrorMsg parse_error(const Frame& f);

}  // namespace cxr
