// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <sstream>
#include <thread>

#include "cxr/client.hpp"
#include "cxr/error.hpp"
#include "cxr/http_api.hpp"
#include "cxr/server.hpp"
#include "cxr/synthetic.hpp"
#include "cxr/tcp.hpp"
#include "test_util.hpp"

using namespace cxr;
using nlohmann::json;

namespace {

std::string pgm_bytes(const GrayImage& img) {
    std::ostringstream o;
    o << "P5\n" << img.width() << " " << img.height() << "\n255\n";
    o.write(reinterpret_cast<const char*>(img.pixels().data()), static_cast<std::streamsize>(img.pixels().size()));
    return o.str();
}

struct Served {
    test::TempDir dir{"net"};
    std::unique_ptr<ServerCore> core;
    std::unique_ptr<TcpServer> tcp;

    Served() {
        ServerConfig sc;
        sc.storage_root = dir / "server";
        core = std::make_unique<ServerCore>(sc);
        core->publish(ModelArtifact::reference(1));
        tcp = std::make_unique<TcpServer>(*core, 0);
        tcp->start();
    }
};

}  // namespace

TEST_SUITE("net") {

TEST_CASE("tcp transport round trip") {
    Served s;
    REQUIRE(s.tcp->port() != 0);
    BandwidthLedger ledger;
    TcpTransport t("127.0.0.1", s.tcp->port(), &ledger);
    auto ex = t.request(make_update_check({}), 5);
    REQUIRE(ex.ok());
    CHECK(ex.frame.type == MsgType::kUpdateAvail);
    auto ua = parse_update_avail(ex.frame);

    auto chunks = t.request(make_frame(ModelChunk{ua.digest, 0, 0, {}}), 5);
    REQUIRE(chunks.ok());
    std::uint64_t got = parse_model_chunk(chunks.frame).data.size();
    while (got < ua.size) {
        auto more = t.next(5);
        REQUIRE(more.ok());
        got += parse_model_chunk(more.frame).data.size();
    }
    CHECK(got == ua.size);
    CHECK(ledger.totals().model_bytes_down == ua.size);

    PredictReq req{"tcp-1", GrayImage(128, 128, 90), {}};
    auto p = t.request(make_frame(req), 5);
    REQUIRE(p.ok());
    CHECK(parse_predict_resp(p.frame).scan_id == "tcp-1");
}

TEST_CASE("tcp transport reports a dead server") {
    std::uint16_t port;
    {
        Served s;
        port = s.tcp->port();
        s.tcp->stop();
    }
    TcpTransport t("127.0.0.1", port);
    auto ex = t.request(make_update_none(), 1);
    CHECK_FALSE(ex.ok());
}

TEST_CASE("client api") {
    Served s;
    ClientConfig cc;
    cc.storage = s.dir / "client";
    cc.server_port = s.tcp->port();
    auto client = std::make_unique<Client>(
        cc, [&](BandwidthLedger* l) { return std::make_unique<TcpTransport>("127.0.0.1", s.tcp->port(), l); });
    client->provision(s.core->registry().active()->compressed);
    ClientApi api(*client);

    auto bad = api.scan("not an image", {});
    CHECK(bad.status == 415);

    auto img = synthetic_disc_image(Label::kPneumonia, 1, 160, 160);
    auto r = api.scan(pgm_bytes(img), {{"id", "api-1"}, {"hospital", "north"}});
    REQUIRE(r.status == 200);
    auto j = json::parse(r.body);
    CHECK(j["id"] == "api-1");
    CHECK(j["source"] == "server");
    CHECK(j["probability"].get<double>() >= 0.0);
    CHECK(j.contains("model_recall"));

    CHECK(api.confirm("{bad json").status == 400);
    CHECK(api.confirm(R"({"id":"ghost","confirmed":true})").status == 404);
    auto c1 = json::parse(api.confirm(R"({"id":"api-1","confirmed":true})").body);
    CHECK(c1["changed"] == true);
    auto c2 = json::parse(api.confirm(R"({"id":"api-1","confirmed":true})").body);
    CHECK(c2["changed"] == false);

    auto st = json::parse(api.status().body);
    CHECK(st["online"] == true);
    CHECK(st["has_model"] == true);
    CHECK(st["model_version"] == 1);
    CHECK(st["cache_depth"] == 0);

    auto list = json::parse(api.scans().body)["scans"];
    REQUIRE(list.is_array());
    REQUIRE(list.size() == 1);
    CHECK(list[0]["confirmed"] == true);

    auto hm = api.heatmap("api-1", "json");
    REQUIRE(hm.status == 200);
    auto hj = json::parse(hm.body);
    CHECK(hj["width"] == 128);
    CHECK(api.heatmap("api-1", "pgm").content_type != "application/json");
    CHECK(api.heatmap("ghost", "pgm").status == 404);
}

TEST_CASE("daemon serves the http api") {
    Served s;
    ClientConfig cc;
    cc.storage = s.dir / "client";
    cc.server_port = s.tcp->port();
    cc.http_port = 0;
    ClientDaemon d(cc);
    d.client().provision(s.core->registry().active()->compressed);
    d.start();
    REQUIRE(d.port() != 0);

    httplib::Client http("127.0.0.1", d.port());
    http.set_read_timeout(30, 0);
    auto img = synthetic_disc_image(Label::kNormal, 2, 128, 128);
    auto res = http.Post("/api/scan", pgm_bytes(img), "image/x-portable-graymap");
    REQUIRE(res);
    CHECK(res->status == 200);
    auto id = json::parse(res->body)["id"].get<std::string>();

    res = http.Post("/api/confirm", json{{"id", id}, {"confirmed", false}}.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);

    res = http.Get("/api/status");
    REQUIRE(res);
    CHECK(json::parse(res->body)["has_model"] == true);

    res = http.Get("/api/scans");
    REQUIRE(res);
    CHECK(json::parse(res->body)["scans"].size() == 1);

    res = http.Post("/api/sync", "", "application/json");
    REQUIRE(res);
    CHECK(res->status == 202);
    for (int i = 0; i < 100 && d.sync_cycles() < 2; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    CHECK(d.sync_cycles() >= 1);

    res = http.Get("/api/heatmap?id=" + id + "&format=json");
    REQUIRE(res);
    CHECK(res->status == 200);
    d.stop();
}

}  // TEST_SUITE
