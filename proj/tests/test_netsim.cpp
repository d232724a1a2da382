// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include <doctest.h>

#include "cxr/error.hpp"
#include "cxr/ledger.hpp"
#include "cxr/netsim.hpp"
#include "cxr/protocol.hpp"
#include "cxr/scenario.hpp"

using namespace cxr;

TEST_SUITE("netsim") {

TEST_CASE("dial-up model download time") {
    LinkProfile p;
    p.bandwidth_kbps = 56;
    p.latency_ms = 100;
    CHECK(p.serialization_time(6'900'000) == doctest::Approx(985.714).epsilon(1e-5));
    double t = transfer_time(6'900'000, p);
    CHECK(t >= 15 * 60);
    CHECK(t <= 18 * 60);
    // Binary megabytes stay inside the window too.
    CHECK(transfer_time(static_cast<std::uint64_t>(6.9 * 1024 * 1024), p) <= 18 * 60);
}

TEST_CASE("scan upload time") {
    LinkProfile p;
    CHECK(p.serialization_time(17408) == doctest::Approx(2.487).epsilon(1e-3));
}

TEST_CASE("outages pause a transfer") {
    LinkProfile p;
    p.bandwidth_kbps = 8;  // 1000 bytes per second
    p.latency_ms = 0;
    p.outages = {{5, 15}};
    CHECK(transfer_time(10000, p) == doctest::Approx(20.0));
    CHECK(transfer_time(10000, p, 6) == doctest::Approx(19.0));
    CHECK(transfer_time(1000, p, 20) == doctest::Approx(1.0));
    CHECK_FALSE(p.up_at(5));
    CHECK(p.up_at(15));
}

TEST_CASE("profile validation") {
    LinkProfile p;
    p.bandwidth_kbps = 0;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.outages = {{10, 20}, {15, 30}};
    CHECK_THROWS_AS(p.validate(), Error);
    p.outages = {{10, 5}};
    CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("links lose frames at outages and stay FIFO") {
    LinkProfile p;
    p.bandwidth_kbps = 8;
    p.latency_ms = 50;
    p.outages = {{10, 20}};
    Link link(&p);
    auto a = link.send(0, 2000);
    auto b = link.send(0, 1000);  // queued behind a
    CHECK(a.delivered);
    CHECK(b.delivered);
    CHECK(b.start == doctest::Approx(2.0));
    CHECK(b.arrival == doctest::Approx(3.05));
    auto cut = link.send(8, 5000);  // would run into the outage
    CHECK_FALSE(cut.delivered);
    CHECK(cut.end == doctest::Approx(10.0));
    auto down = link.send(12, 10);
    CHECK_FALSE(down.delivered);
    auto after = link.send(20, 1000);
    CHECK(after.delivered);
    CHECK(link.frames_lost() == 2);
    CHECK(link.bytes_offered() == 9010);
    CHECK(link.bytes_delivered() == 4000);
    CHECK(link.history().size() == 3);
    CHECK(peak_throughput_kbps(link.history()) <= p.bandwidth_kbps + 1e-9);
}

TEST_CASE("event queue runs in time order with stable ties") {
    EventQueue q;
    std::string order;
    q.at(2, [&] { order += "c"; });
    q.at(1, [&] { order += "a"; });
    q.at(1, [&] {
        order += "b";
        q.at(0.5, [&] { order += "d"; });  // in the past: runs next, clock holds
    });
    double clock = 0;
    while (!q.empty()) q.run_one(clock);
    CHECK(order == "abdc");
    CHECK(clock == 2);
}

TEST_CASE("request and response through the simulated network") {
    LinkProfile p;
    p.bandwidth_kbps = 56;
    p.latency_ms = 100;
    SimNetwork net(p, [](const Frame& f) -> std::vector<Frame> {
        auto req = parse_predict_req(f);
        return {make_frame(PredictResp{req.scan_id, 0.9f, Label::kPneumonia, 0, 1, 0.9f, 0.9f})};
    });
    BandwidthLedger ledger;
    auto conn = net.connect(&ledger);
    PredictReq req;
    req.scan_id = "s1";
    req.image = GrayImage(128, 128);
    auto ex = conn->request(make_frame(req), 10);
    REQUIRE(ex.ok());
    CHECK(parse_predict_resp(ex.frame).scan_id == "s1");
    CHECK(net.now() > 2.4);
    CHECK(net.now() < 3.0);
    auto t = ledger.totals();
    CHECK(t.bytes_up == net.uplink().bytes_offered());
    CHECK(t.bytes_down == net.downlink().bytes_delivered());

    // A timeout shorter than the upload gives up.
    auto slow = conn->request(make_frame(req), 1);
    CHECK(slow.status == ExchangeStatus::kTimeout);
}

TEST_CASE("requests during an outage time out") {
    LinkProfile p;
    p.outages = {{0, 100}};
    SimNetwork net(p, [](const Frame&) { return std::vector<Frame>{make_ack()}; });
    auto conn = net.connect(nullptr);
    auto ex = conn->request(make_update_none(), 10);
    CHECK(ex.status == ExchangeStatus::kTimeout);
    CHECK(net.now() == doctest::Approx(10.0));
    CHECK(net.uplink().frames_lost() == 1);
}

TEST_CASE("weekly budget") {
    CHECK(ledger_weekly_total(100, 17, 1, 1, 5) == 17720.0);
    CHECK(WeeklyBudget{}.total_kb() == 17720.0);
    CHECK(ledger_weekly_total(0, 17, 1, 2, 5) == 10240.0);
}

}  // TEST_SUITE
