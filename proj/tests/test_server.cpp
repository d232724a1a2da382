// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include <doctest.h>

#include <cstdlib>
#include <thread>

#include "cxr/error.hpp"
#include "cxr/server.hpp"
#include "cxr/synthetic.hpp"
#include "test_util.hpp"

using namespace cxr;

namespace {

ServerConfig small_config(const std::filesystem::path& root) {
    ServerConfig sc;
    sc.storage_root = root;
    sc.train.epochs = 1;
    sc.train.patience = 1;
    sc.train.batch_size = 8;
    return sc;
}

PredictReq req(const std::string& id, std::uint64_t seed, Label l = Label::kNormal) {
    return {id, preprocess(synthetic_disc_image(l, seed, 128, 128), {}), {}};
}

PredictResp ask(ServerCore& s, const Frame& f) {
    auto out = s.handle(f);
    REQUIRE(out.size() == 1);
    REQUIRE(out[0].type == MsgType::kPredictResp);
    return parse_predict_resp(out[0]);
}

ErrorMsg error_of(const std::vector<Frame>& out) {
    REQUIRE(out.size() == 1);
    REQUIRE(out[0].type == MsgType::kError);
    return parse_error(out[0]);
}

}  // namespace

TEST_SUITE("server") {

TEST_CASE("predictions need a published model") {
    test::TempDir dir("server");
    ServerCore s(small_config(dir.path()));
    CHECK(error_of(s.handle(make_frame(req("a", 1)))).reason == Reason::kUnavailable);
    CHECK(error_of(s.handle(make_update_check({}))).reason == Reason::kUnavailable);
}

TEST_CASE("retried scans are deduplicated") {
    test::TempDir dir("server");
    ServerCore s(small_config(dir.path()));
    s.publish(ModelArtifact::reference(1));
    auto first = ask(s, make_frame(req("a", 1)));
    CHECK((first.flags & kFlagDuplicate) == 0);
    auto again = ask(s, make_frame(req("a", 1)));
    CHECK((again.flags & kFlagDuplicate) != 0);
    CHECK(again.probability == first.probability);
    CHECK(s.store().size() == 1);
    CHECK(s.predictions_served() == 1);
    // A flush of the same scan is re-scored but stored once.
    auto flushed = ask(s, make_frame(FlushBatch{req("a", 1), 0.1f, Label::kNormal, 1}));
    CHECK(flushed.probability == first.probability);
    CHECK(s.store().size() == 1);
}

TEST_CASE("update flag follows the client's model digest") {
    test::TempDir dir("server");
    ServerCore s(small_config(dir.path()));
    auto e1 = s.publish(ModelArtifact::reference(1));
    auto r = req("a", 1);
    r.metadata["model"] = to_hex(e1.compressed_digest);
    CHECK((ask(s, make_frame(r)).flags & kFlagUpdateAvailable) == 0);
    auto e2 = s.publish(ModelArtifact::reference(2));
    r.scan_id = "b";
    CHECK((ask(s, make_frame(r)).flags & kFlagUpdateAvailable) != 0);
    r.scan_id = "c";
    r.metadata.erase("model");
    CHECK((ask(s, make_frame(r)).flags & kFlagUpdateAvailable) == 0);

    CHECK(s.handle(make_update_check(e2.compressed_digest))[0].type == MsgType::kUpdateNone);
    auto ua = parse_update_avail(s.handle(make_update_check(e1.compressed_digest))[0]);
    CHECK(ua.digest == e2.compressed_digest);
    CHECK(ua.version == 2);
    CHECK(ua.size == e2.compressed_size);
}

TEST_CASE("model streaming and resume offsets") {
    test::TempDir dir("server");
    ServerCore s(small_config(dir.path()));
    auto e = s.publish(ModelArtifact::reference(1));
    auto all = s.handle(make_frame(ModelChunk{e.compressed_digest, 0, 0, {}}));
    CHECK(all.size() == (e.compressed_size + kChunkSize - 1) / kChunkSize);
    Bytes joined;
    for (const auto& f : all) {
        auto c = parse_model_chunk(f);
        CHECK(c.offset == joined.size());
        joined.insert(joined.end(), c.data.begin(), c.data.end());
    }
    CHECK(joined == s.registry().active()->compressed);
    auto tail = s.handle(make_frame(ModelChunk{e.compressed_digest, 2 * kChunkSize, 0, {}}));
    CHECK(tail.size() == all.size() - 2);
    Digest nobody{};
    nobody[0] = 1;
    CHECK(error_of(s.handle(make_frame(ModelChunk{nobody, 0, 0, {}}))).reason == Reason::kNotFound);
    // Superseded versions stay downloadable.
    s.publish(ModelArtifact::reference(2));
    CHECK(s.handle(make_frame(ModelChunk{e.compressed_digest, 0, 0, {}})).size() == all.size());
}

TEST_CASE("bad frames come back as error frames") {
    test::TempDir dir("server");
    ServerCore s(small_config(dir.path()));
    Bytes junk{'X', 'X', 1, 1, 0, 0, 0, 0, 0, 0, 0, 0};
    CHECK(error_of(s.handle_bytes(junk)).reason == Reason::kBadMagic);
    CHECK(error_of(s.handle(make_frame(PredictResp{"x", 0.5f, Label::kNormal, 0, 1, 0.f, 0.f}))).reason == Reason::kBadType);
    s.publish(ModelArtifact::reference(1));
    CHECK(error_of(s.handle(make_frame(ConfirmReq{"ghost", Label::kNormal, true}))).reason == Reason::kNotFound);
}

TEST_CASE("registry keeps an auditable history") {
    test::TempDir dir("server");
    {
        ModelRegistry reg(dir / "reg");
        CHECK(reg.active() == nullptr);
        auto a = reg.publish(ModelArtifact::reference(1, 32));
        auto b = reg.publish(ModelArtifact::reference(2, 32));
        CHECK(a.version == 1);
        CHECK(b.version == 2);
        CHECK(reg.active()->entry.version == 2);
        auto parent = reg.load(2).model.parent_digest();
        CHECK(parent == a.digest);
        reg.activate(1);
        CHECK(reg.active()->entry.version == 1);
        CHECK_THROWS_AS(reg.activate(9), Error);
    }
    ModelRegistry reopened(dir / "reg");
    CHECK(reopened.versions().size() == 2);
    CHECK(reopened.active()->entry.version == 1);
    CHECK(reopened.latest_version() == 2);
    // Tampering with a stored object is caught on load.
    auto v2 = reopened.versions()[1];
    auto path = dir / ("reg/objects/" + to_hex(v2.compressed_digest) + ".cxrc");
    auto bytes = read_file(path);
    bytes[100] ^= 1;
    write_file_atomic(path, bytes);
    CHECK_THROWS_AS(reopened.load(2), Error);
    CHECK_THROWS_AS(reopened.activate(2), Error);
    CHECK(reopened.active()->entry.version == 1);
}

TEST_CASE("retrain respects the threshold and the strict comparison") {
    test::TempDir dir("server");
    auto cfg = small_config(dir.path());
    cfg.policy.threshold = 6;
    cfg.train.learning_rate = 1e-12;  // candidate indistinguishable from the active model
    ServerCore s(cfg);
    s.publish(ModelArtifact::reference(1));
    s.set_holdout(synthetic_disc_set(10, 77));
    CHECK(s.has_holdout());
    for (int i = 0; i < 5; ++i) {
        Label l = i % 2 ? Label::kNormal : Label::kPneumonia;
        std::string id = "s" + std::to_string(i);
        ask(s, make_frame(req(id, i, l)));
        s.handle(make_frame(ConfirmReq{id, l, true}));
    }
    auto below = s.retrain_and_maybe_replace();
    CHECK_FALSE(below.ran);
    CHECK(s.store().update_batch_size() == 5);

    auto forced = s.retrain_and_maybe_replace(true);
    CHECK(forced.ran);
    CHECK(forced.epochs == 1);
    CHECK(forced.candidate_score == forced.active_score);
    CHECK_FALSE(forced.replaced);
    CHECK(s.registry().active()->entry.version == 1);
    CHECK(s.store().update_batch_size() == 0);
}

TEST_CASE("replacement publishes a new version when the candidate scores higher") {
    test::TempDir dir("server");
    auto cfg = small_config(dir.path());
    cfg.train.epochs = 3;
    cfg.train.patience = 3;
    ServerCore s(cfg);
    // An active model that never predicts Pneumonia scores zero on recall.
    auto m = ModelArtifact::reference(1);
    auto& bias = m.mutable_params().back();
    bias[0] = 3.0;
    bias[1] = -3.0;
    s.publish(m);
    s.set_holdout(synthetic_disc_set(20, 78));
    CHECK(s.policy_score(s.registry().active()->model) == 0.0);
    for (int i = 0; i < 24; ++i) {
        Label l = i % 2 ? Label::kNormal : Label::kPneumonia;
        std::string id = "s" + std::to_string(i);
        ask(s, make_frame(req(id, 100 + i, l)));
        s.handle(make_frame(ConfirmReq{id, l, true}));
    }
    auto rep = s.retrain_and_maybe_replace(true);
    REQUIRE(rep.ran);
    CHECK(rep.replaced == (rep.candidate_score > rep.active_score));
    if (rep.replaced) {
        CHECK(rep.version_after == 2);
        CHECK(s.registry().active()->entry.version == 2);
        CHECK(s.registry().active()->model.parent_digest() == s.registry().load(1).entry.digest);
    }
}

TEST_CASE("concurrent retrains are serialized") {
    test::TempDir dir("server");
    auto cfg = small_config(dir.path());
    cfg.train.learning_rate = 1e-12;
    ServerCore s(cfg);
    s.publish(ModelArtifact::reference(1));
    s.set_holdout(synthetic_disc_set(6, 79));
    for (int i = 0; i < 4; ++i) {
        std::string id = "s" + std::to_string(i);
        ask(s, make_frame(req(id, i)));
        s.handle(make_frame(ConfirmReq{id, i % 2 ? Label::kNormal : Label::kPneumonia, true}));
    }
    RetrainReport a, b;
    std::thread t1([&] { a = s.retrain_and_maybe_replace(true); });
    std::thread t2([&] { b = s.retrain_and_maybe_replace(true); });
    t1.join();
    t2.join();
    CHECK(int(a.ran) + int(b.ran) == 1);
}

TEST_CASE("predictions keep flowing while a new model is published") {
    test::TempDir dir("server");
    ServerCore s(small_config(dir.path()));
    s.publish(ModelArtifact::reference(1));
    std::atomic<bool> stop{false};
    std::atomic<int> bad{0}, served{0};
    std::thread reader([&] {
        int i = 0;
        while (!stop) {
            auto out = s.handle(make_frame(req("c" + std::to_string(i++), 5)));
            if (out.size() != 1 || out[0].type != MsgType::kPredictResp) {
                ++bad;
                continue;
            }
            auto v = parse_predict_resp(out[0]).model_version;
            if (v < 1 || v > 3) ++bad;
            ++served;
        }
    });
    s.publish(ModelArtifact::reference(2));
    s.publish(ModelArtifact::reference(3));
    stop = true;
    reader.join();
    CHECK(bad == 0);
    CHECK(served > 0);
    CHECK(s.registry().active()->entry.version == 3);
}

TEST_CASE("public export and section defaults") {
    test::TempDir dir("server");
    auto cfg = small_config(dir / "priv");
    ServerCore priv(cfg);
    priv.publish(ModelArtifact::reference(1));
    ask(priv, make_frame(req("p1", 1)));
    CHECK(priv.export_public(dir / "out1").empty());

    cfg.storage_root = dir / "pub";
    cfg.default_section = Section::kPublic;
    ServerCore pub(cfg);
    pub.publish(ModelArtifact::reference(1));
    auto r = req("q1", 2);
    r.metadata = {{"hospital", "north"}, {"age", "61"}};
    ask(pub, make_frame(r));
    auto out = pub.export_public(dir / "out2");
    REQUIRE(out.size() == 1);
    CHECK(out[0].id == "q1");
    CHECK(pub.store().get("q1")->diversity.hospital == std::optional<std::string>("north"));
    CHECK(pub.store().get("q1")->diversity.age == std::optional<std::uint32_t>(61));
}

TEST_CASE("environment overrides") {
    ServerConfig sc;
    ::setenv("CXR_STORAGE_ROOT", "/tmp/cxr-env-root", 1);
    ::setenv("CXR_SERVER_PORT", "9123", 1);
    sc.apply_env();
    CHECK(sc.storage_root == "/tmp/cxr-env-root");
    CHECK(sc.port == 9123);
    ::setenv("CXR_SERVER_PORT", "70000", 1);
    CHECK_THROWS_AS(sc.apply_env(), Error);
    ::unsetenv("CXR_STORAGE_ROOT");
    ::unsetenv("CXR_SERVER_PORT");
    RetrainPolicy p;
    p.threshold = 0;
    CHECK_THROWS_AS(p.validate(), Error);
}

}  // TEST_SUITE
