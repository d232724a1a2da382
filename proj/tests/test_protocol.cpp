// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include <doctest.h>

#include "cxr/error.hpp"
#include "cxr/ledger.hpp"
#include "cxr/protocol.hpp"

using namespace cxr;

namespace {

PredictReq sample_req() {
    PredictReq r;
    r.scan_id = "edge-7";
    r.image = GrayImage(128, 128, 33);
    r.image.at(5, 9) = 200;
    r.metadata = {{"hospital", "north"}, {"age", "54"}};
    return r;
}

Frame round_trip(const Frame& f) { return decode_frame(encode_frame(f)); }

// First word of the error message names the rejection reason.
std::string reason_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kProtocol);
        std::string what = e.what();
        return what.substr(0, what.find(':'));
    }
    return "none";
}

}  // namespace

TEST_SUITE("protocol") {

TEST_CASE("every message type round trips") {
    auto req = sample_req();
    CHECK(parse_predict_req(round_trip(make_frame(req))) == req);

    PredictResp resp{"edge-7", 0.73f, Label::kPneumonia, kFlagUpdateAvailable, 3, 0.97f, 0.88f};
    CHECK(parse_predict_resp(round_trip(make_frame(resp))) == resp);

    ConfirmReq c{"edge-7", Label::kPneumonia, false};
    CHECK(parse_confirm_req(round_trip(make_frame(c))) == c);
    CHECK(c.diagnosis() == Label::kNormal);
    c.confirmed = true;
    CHECK(c.diagnosis() == Label::kPneumonia);

    CHECK_FALSE(parse_ack(round_trip(make_ack())).has_value());
    CHECK(parse_ack(round_trip(make_ack(81920))) == std::optional<std::uint64_t>(81920));

    Digest d{};
    d[0] = 0xAB;
    d[31] = 0x01;
    CHECK(parse_update_check(round_trip(make_update_check(d))) == d);

    UpdateAvail ua{d, 178723, 2};
    CHECK(parse_update_avail(round_trip(make_frame(ua))) == ua);
    CHECK(round_trip(make_update_none()).type == MsgType::kUpdateNone);

    ModelChunk mc{d, 8192, 20000, Bytes(kChunkSize, 0x5A)};
    CHECK(parse_model_chunk(round_trip(make_frame(mc))) == mc);

    FlushBatch fb{req, 0.4f, Label::kNormal, 1};
    CHECK(parse_flush_batch(round_trip(make_frame(fb))) == fb);

    ErrorMsg em{Reason::kNotFound, "no such model"};
    CHECK(parse_error(round_trip(make_frame(em))) == em);
}

TEST_CASE("wire sizes") {
    auto f = make_frame(sample_req());
    CHECK(f.payload.size() == kImageBytes + kMetadataBytes);
    CHECK(f.payload.size() == 17408);
    CHECK(encode_frame(f).size() == 17408 + kFrameOverhead);
    PredictResp resp{"edge-7", 0.5f, Label::kNormal, 0, 1, 0.9f, 0.9f};
    CHECK(encode_frame(make_frame(resp)).size() < 300);
    CHECK(ledger_weekly_total(100, 17, 1, 1, 5) == 17720.0);
}

TEST_CASE("framing errors carry a reason") {
    auto wire = encode_frame(make_ack());
    auto bad = wire;
    bad[0] = 'Z';
    CHECK(reason_of([&] { decode_frame(bad); }) == "bad-magic");
    bad = wire;
    bad[2] = 9;
    CHECK(reason_of([&] { decode_frame(bad); }) == "bad-version");
    bad = wire;
    bad.back() ^= 1;
    CHECK(reason_of([&] { decode_frame(bad); }) == "bad-checksum");
    bad = wire;
    bad.pop_back();
    CHECK(reason_of([&] { decode_frame(bad); }) == "bad-length");
    Bytes shorty(wire.begin(), wire.begin() + 4);
    CHECK(reason_of([&] { decode_frame(shorty); }) == "bad-length");

    Frame weird{MsgType::kAck, {}};
    auto w = encode_frame(weird);
    w[3] = 42;
    // Fix the checksum so only the type is wrong.
    Bytes body(w.begin(), w.end() - 4);
    auto crc = crc32(body);
    for (int i = 0; i < 4; ++i) w[w.size() - 4 + i] = static_cast<std::uint8_t>(crc >> (8 * i));
    CHECK(reason_of([&] { decode_frame(w); }) == "bad-type");

    Bytes huge = {'C', 'X', kProtocolVersion, 1, 0xFF, 0xFF, 0xFF, 0x7F};
    CHECK(reason_of([&] { frame_length(huge); }) == "oversized");
}

TEST_CASE("payload errors carry a reason") {
    CHECK(reason_of([] { parse_predict_resp(make_ack()); }) == "bad-type");
    Frame trunc = make_frame(sample_req());
    trunc.payload.resize(100);
    CHECK(reason_of([&] { parse_predict_req(trunc); }) == "bad-payload");
    CHECK(reason_of([&] { parse_ack(Frame{MsgType::kAck, Bytes(3, 0)}); }) == "bad-payload");
    PredictResp resp{"edge-7", 0.5f, Label::kNormal, 0, 1, 0.9f, 0.9f};
    auto f = make_frame(resp);
    f.payload[4] = 7;  // verdict byte follows the probability
    CHECK(reason_of([&] { parse_predict_resp(f); }) == "bad-payload");
}

TEST_CASE("metadata block") {
    Metadata m{{"a", "1"}, {"b", "two words"}};
    auto block = encode_metadata(m);
    CHECK(block.size() == kMetadataBytes);
    CHECK(decode_metadata(block) == m);
    CHECK_THROWS_AS(encode_metadata({{"bad=key", "x"}}), Error);
    CHECK_THROWS_AS(encode_metadata({{"k", std::string(2000, 'x')}}), Error);
    auto req = sample_req();
    req.image = GrayImage(64, 64);
    CHECK_THROWS_AS(make_frame(req), Error);
}

TEST_CASE("ledger counts frames by direction and type") {
    BandwidthLedger l;
    auto f = make_frame(sample_req());
    l.sent(f, encode_frame(f).size());
    ModelChunk mc{{}, 0, 10, Bytes(10, 1)};
    auto cf = make_frame(mc);
    l.received(cf, encode_frame(cf).size());
    auto t = l.totals();
    CHECK(t.bytes_up == 17420);
    CHECK(t.scans_up == 1);
    CHECK(t.model_bytes_down == 10);
    CHECK(t.frames_down == 1);
    CHECK(t.up_by_type[1] == 17420);
    CHECK(render_ledger_kv(t).find("bytes_up=17420") != std::string::npos);
    l.reset();
    CHECK(l.totals() == LedgerTotals{});
}

}  // TEST_SUITE
