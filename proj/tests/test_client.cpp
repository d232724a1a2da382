// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include <doctest.h>

#include "cxr/client.hpp"
#include "cxr/compress.hpp"
#include "cxr/error.hpp"
#include "cxr/server.hpp"
#include "cxr/synthetic.hpp"
#include "test_util.hpp"

using namespace cxr;

namespace {

// A server plus a client wired through loopback transports the test can
// take offline.
struct Rig {
    test::TempDir dir{"client"};
    std::unique_ptr<ServerCore> server;
    std::vector<LoopbackTransport*> links;
    std::vector<std::string> events;

    Rig() {
        ServerConfig sc;
        sc.storage_root = dir / "server";
        server = std::make_unique<ServerCore>(sc);
        server->publish(ModelArtifact::reference(1));
    }

    std::unique_ptr<Client> client() {
        links.clear();
        ClientConfig cc;
        cc.storage = dir / "client";
        auto c = std::make_unique<Client>(cc, [this](BandwidthLedger* l) {
            auto t = std::make_unique<LoopbackTransport>([this](const Frame& f) { return server->handle(f); }, l);
            links.push_back(t.get());
            return t;
        });
        c->set_event_sink([this](const std::string& e) { events.push_back(e); });
        return c;
    }

    void set_online(bool up) {
        for (auto* l : links) l->set_online(up);
    }

    Bytes active_compressed() const { return server->registry().active()->compressed; }
    Digest active_digest() const { return server->registry().active()->entry.compressed_digest; }
};

GrayImage xray(Label l, std::uint64_t seed) { return synthetic_disc_image(l, seed, 200, 180); }

}  // namespace

TEST_SUITE("client") {

TEST_CASE("config parsing") {
    auto c = ClientConfig::parse(
        "# edge box\nstorage=/tmp/x\nserver_port=9000\ngamma=2.0\nrequest_timeout=5\nmetadata.hospital=north\n");
    CHECK(c.storage == "/tmp/x");
    CHECK(c.server_port == 9000);
    CHECK(c.preprocess.gamma == 2.0);
    CHECK(c.request_timeout_s == 5.0);
    CHECK(c.metadata.at("hospital") == "north");
    CHECK_THROWS_AS(ClientConfig::parse("colour=blue\n"), Error);
    CHECK_THROWS_AS(ClientConfig::parse("server_port=99999\n"), Error);
}

TEST_CASE("picture cache keeps order across reopen and compacts") {
    test::TempDir dir("cache");
    auto item = [](const std::string& id, CacheItem::Kind k) {
        CacheItem c;
        c.kind = k;
        c.id = id;
        if (k == CacheItem::Kind::kScan) c.image = GrayImage(128, 128, 4);
        c.metadata = {{"k", "v"}};
        return c;
    };
    {
        PictureCache cache(dir.path());
        CHECK(cache.push(item("a", CacheItem::Kind::kScan)));
        CHECK(cache.push(item("a", CacheItem::Kind::kConfirm)));
        CHECK(cache.push(item("b", CacheItem::Kind::kScan)));
        CHECK_FALSE(cache.push(item("b", CacheItem::Kind::kScan)));
        CHECK(cache.size() == 3);
    }
    PictureCache cache(dir.path());
    REQUIRE(cache.size() == 3);
    CHECK(cache.front()->id == "a");
    CHECK(cache.front()->image == GrayImage(128, 128, 4));
    cache.pop();
    CHECK(cache.front()->kind == CacheItem::Kind::kConfirm);
    CHECK(cache.has_pending("b"));
    cache.pop();
    cache.pop();
    CHECK(cache.size() == 0);
    CHECK_FALSE(cache.front().has_value());
    PictureCache again(dir.path());
    CHECK(again.size() == 0);
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir.path()))
        if (e.path().extension() == ".item") ++files;
    CHECK(files == 0);
}

TEST_CASE("online scans are served by the server") {
    Rig rig;
    auto c = rig.client();
    c->provision(rig.active_compressed());
    auto r = c->handle_scan(xray(Label::kPneumonia, 1));
    CHECK(r.source == ScanSource::kServer);
    CHECK(r.id == "edge-1");
    CHECK(r.model_version == 1);
    CHECK(c->online());
    CHECK(c->cache().size() == 0);
    CHECK(rig.server->store().contains("edge-1"));
    auto named = c->handle_scan(xray(Label::kNormal, 2), {{"age", "40"}}, "ward-3");
    CHECK(named.id == "ward-3");
    CHECK_THROWS_AS(c->handle_scan(xray(Label::kNormal, 2), {}, "ward-3"), Error);
}

TEST_CASE("offline scans are answered locally and flushed once") {
    Rig rig;
    auto c = rig.client();
    c->provision(rig.active_compressed());
    rig.set_online(false);
    for (std::uint64_t i = 0; i < 3; ++i) {
        auto r = c->handle_scan(xray(i % 2 ? Label::kNormal : Label::kPneumonia, i));
        CHECK(r.source == ScanSource::kLocal);
        CHECK(r.model_version == 1);
    }
    CHECK_FALSE(c->online());
    CHECK(c->cache().size() == 3);
    CHECK(rig.server->store().size() == 0);

    // Restart: queue and history come back.
    c.reset();
    c = rig.client();
    CHECK(c->cache().size() == 3);
    CHECK(c->evaluated_scans().size() == 3);
    CHECK(c->evaluated("edge-2")->result.source == ScanSource::kLocal);

    auto rep = c->sync_cycle();
    CHECK(rep.completed);
    CHECK(rep.scans_flushed == 3);
    CHECK(c->cache().size() == 0);
    CHECK(rig.server->store().size() == 3);
    for (const auto& e : c->evaluated_scans()) {
        CHECK(e.delivered);
        CHECK(e.server_probability.has_value());
    }
    auto again = c->sync_cycle();
    CHECK(again.scans_flushed == 0);
    // New ids continue after a restart.
    CHECK(c->handle_scan(xray(Label::kNormal, 9)).id == "edge-4");
}

TEST_CASE("no server and no model is unavailable") {
    Rig rig;
    auto c = rig.client();
    rig.set_online(false);
    try {
        c->handle_scan(xray(Label::kNormal, 1));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kUnavailable);
    }
    CHECK(c->cache().size() == 0);
}

TEST_CASE("confirmations") {
    Rig rig;
    auto c = rig.client();
    c->provision(rig.active_compressed());
    auto r = c->handle_scan(xray(Label::kPneumonia, 3));
    CHECK_THROWS_AS(c->record_confirmation("nope", true), Error);
    CHECK(c->record_confirmation(r.id, true));
    CHECK_FALSE(c->record_confirmation(r.id, true));
    CHECK(rig.server->store().get(r.id)->confirmed);
    CHECK(rig.server->store().get(r.id)->label == r.verdict);

    rig.set_online(false);
    CHECK(c->record_confirmation(r.id, false));
    CHECK(c->cache().size() == 1);
    rig.set_online(true);
    c->sync_cycle();
    CHECK(c->cache().size() == 0);
    CHECK(rig.server->store().get(r.id)->label != r.verdict);
    CHECK(c->evaluated(r.id)->confirmed == false);
}

TEST_CASE("confirmation of a queued scan waits behind it") {
    Rig rig;
    auto c = rig.client();
    c->provision(rig.active_compressed());
    rig.set_online(false);
    auto r = c->handle_scan(xray(Label::kNormal, 4));
    rig.set_online(true);
    CHECK(c->record_confirmation(r.id, true));
    auto items = c->cache().items();
    REQUIRE(items.size() == 2);
    CHECK(items[0].kind == CacheItem::Kind::kScan);
    CHECK(items[1].kind == CacheItem::Kind::kConfirm);
    auto rep = c->sync_cycle();
    CHECK(rep.scans_flushed == 1);
    CHECK(rep.confirmations_flushed == 1);
    CHECK(rig.server->store().get(r.id)->confirmed);
}

TEST_CASE("no model bytes move when digests match") {
    Rig rig;
    auto c = rig.client();
    c->provision(rig.active_compressed());
    auto rep = c->sync_cycle();
    CHECK(rep.checked);
    CHECK_FALSE(rep.update_available);
    CHECK(rep.model_bytes == 0);
    CHECK(c->status().ledger.model_bytes_down == 0);
}

TEST_CASE("a newer model is downloaded and installed atomically") {
    Rig rig;
    auto c = rig.client();
    c->provision(rig.active_compressed());
    rig.server->publish(ModelArtifact::reference(2));
    auto r = c->handle_scan(xray(Label::kNormal, 5));
    CHECK(r.model_version == 2);
    CHECK(c->wants_sync());
    auto rep = c->sync_cycle();
    CHECK(rep.installed);
    CHECK(rep.installed_version == 2);
    CHECK(rep.model_bytes == rig.active_compressed().size());
    auto st = c->status();
    CHECK(st.model_version == 2);
    CHECK(st.model_digest == rig.active_digest());
    CHECK(st.ledger.model_bytes_down == rig.active_compressed().size());
    CHECK_FALSE(c->wants_sync());
    CHECK(std::filesystem::is_empty(rig.dir / "client/download"));
    // Survives a restart.
    c.reset();
    c = rig.client();
    CHECK(c->status().model_digest == rig.active_digest());
}

TEST_CASE("interrupted downloads resume from the persisted offset") {
    Rig rig;
    auto c = rig.client();
    c->provision(rig.active_compressed());
    rig.server->publish(ModelArtifact::reference(3));
    const auto total = rig.active_compressed().size();
    rig.links[1]->drop_after(4);  // the update notice and three chunks
    auto first = c->sync_cycle();
    CHECK_FALSE(first.installed);
    CHECK(c->status().download_offset == 3 * kChunkSize);
    CHECK(c->status().model_version == 1);

    c.reset();
    c = rig.client();
    std::uintmax_t partial = 0;
    for (const auto& e : std::filesystem::directory_iterator(rig.dir / "client/download")) partial += e.file_size();
    CHECK(partial == 3 * kChunkSize);
    auto second = c->sync_cycle();
    CHECK(second.installed);
    CHECK(second.model_bytes == total - 3 * kChunkSize);
    CHECK(c->status().model_digest == rig.active_digest());
}

TEST_CASE("every kill point leaves a digest-valid model") {
    const KillPoint points[] = {KillPoint::kAfterUpdateCheck, KillPoint::kMidDownload, KillPoint::kDownloadComplete,
                                KillPoint::kStaged, KillPoint::kInstalled};
    for (auto kp : points) {
        CAPTURE(static_cast<int>(kp));
        Rig rig;
        auto c = rig.client();
        c->provision(rig.active_compressed());
        const auto old_digest = rig.active_digest();
        rig.server->publish(ModelArtifact::reference(4));
        const auto new_digest = rig.active_digest();
        c->set_kill_point(kp, 2);
        CHECK_THROWS_AS(c->sync_cycle(), SimulatedCrash);
        c.reset();

        c = rig.client();
        auto st = c->status();
        REQUIRE(st.has_model);
        CHECK((st.model_digest == old_digest || st.model_digest == new_digest));
        if (kp == KillPoint::kInstalled) CHECK(st.model_digest == new_digest);
        // The local model really is the one the digest names.
        auto bytes = read_file(rig.dir / "client/model.cxrc");
        CHECK(compressed_digest_of(bytes) == st.model_digest);
        CHECK(decompress_model(bytes).model.digest() == c->local_model()->digest());

        auto rep = c->sync_cycle();
        CHECK(rep.completed);
        CHECK(c->status().model_digest == new_digest);
    }
}

TEST_CASE("a corrupt installed model is discarded at startup") {
    Rig rig;
    auto c = rig.client();
    c->provision(rig.active_compressed());
    c.reset();
    auto bytes = read_file(rig.dir / "client/model.cxrc");
    bytes[bytes.size() / 2] ^= 0xFF;
    write_file_atomic(rig.dir / "client/model.cxrc", bytes);
    c = rig.client();
    CHECK_FALSE(c->status().has_model);
    // The next sync restores one.
    c->sync_cycle();
    CHECK(c->status().model_digest == rig.active_digest());
}

TEST_CASE("provisioning rejects garbage") {
    Rig rig;
    auto c = rig.client();
    Bytes junk(1000, 7);
    CHECK_THROWS_AS(c->provision(junk), Error);
    CHECK_FALSE(c->status().has_model);
}

}  // TEST_SUITE
