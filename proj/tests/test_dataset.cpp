// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include <doctest.h>

#include <set>

#include "cxr/dataset.hpp"
#include "cxr/error.hpp"
#include "cxr/random.hpp"
#include "cxr/scan_store.hpp"
#include "test_util.hpp"

using namespace cxr;

namespace {

// Records without images; splitting and resampling only look at labels.
std::vector<ScanRecord> labelled(std::size_t normal, std::size_t pneumonia) {
    std::vector<ScanRecord> out;
    for (std::size_t i = 0; i < normal + pneumonia; ++i) {
        ScanRecord r;
        r.id = "r" + std::to_string(i);
        r.label = i < normal ? Label::kNormal : Label::kPneumonia;
        out.push_back(r);
    }
    return out;
}

std::set<std::string> ids(const RecordSet& s) {
    std::set<std::string> out;
    for (const auto& r : s.records) out.insert(r.id);
    return out;
}

ScanRecord scan(const std::string& id, std::uint8_t fill = 7) {
    ScanRecord r;
    r.id = id;
    r.image = GrayImage(128, 128, fill);
    return r;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("ten records split eight to two") {
    auto recs = labelled(5, 5);
    auto [train, test] = split(recs, {0.2, 1});
    CHECK(train.size() == 8);
    CHECK(test.size() == 2);
    CHECK(test.role == SetRole::kTest);
    CHECK(test.count(Label::kNormal) == 1);
    auto a = ids(train), b = ids(test);
    for (const auto& id : b) CHECK_FALSE(a.count(id));
}

TEST_CASE("full-size dataset split holds 624 test records") {
    auto recs = labelled(1583, 4273);
    REQUIRE(recs.size() == 5856);
    auto [train, test] = split(recs, {624.0 / 5856.0, 9});
    CHECK(test.size() == 624);
    CHECK(train.size() == 5232);
}

TEST_CASE("split is a deterministic stratified partition") {
    auto recs = labelled(30, 70);
    auto [tr1, te1] = split(recs, {0.3, 5});
    auto [tr2, te2] = split(recs, {0.3, 5});
    CHECK(ids(te1) == ids(te2));
    CHECK(te1.count(Label::kNormal) == 9);
    CHECK(te1.count(Label::kPneumonia) == 21);
    CHECK(tr1.size() + te1.size() == 100);
}

TEST_CASE("split errors") {
    CHECK_THROWS_AS(split(labelled(0, 10), {0.2, 1}), Error);
    CHECK_THROWS_AS(split(labelled(5, 5), {0.0, 1}), Error);
    CHECK_THROWS_AS(split(labelled(5, 5), {1.0, 1}), Error);
}

TEST_CASE("rebalance equalizes the skewed train split") {
    RecordSet train{SetRole::kTrain, labelled(1349, 3883)};
    auto out = rebalance(train, 0.5, 3);
    auto n = out.count(Label::kNormal), p = out.count(Label::kPneumonia);
    CHECK((n > p ? n - p : p - n) <= 1);
    auto orig = ids(train);
    for (const auto& r : out.records) CHECK(orig.count(r.origin_id()));
}

TEST_CASE("rebalance of a balanced set is a fixed point") {
    RecordSet train{SetRole::kTrain, labelled(20, 20)};
    auto out = rebalance(train, 0.5, 3);
    CHECK(ids(out) == ids(train));
    CHECK(out.size() == train.size());
}

TEST_CASE("resampling a test set is refused") {
    auto recs = labelled(10, 30);
    auto [train, test] = split(recs, {0.25, 1});
    CHECK_THROWS_AS(rebalance(test, 0.5, 1), Error);
    try {
        rebalance(test, 0.5, 1);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kLeakage);
    }
    CHECK_THROWS_AS(expand_with_augmentation(test, AugmentConfig::identity(), 1), Error);
}

TEST_CASE("no resampled or augmented id reaches the test split over 100 seeds") {
    std::vector<ScanRecord> recs;
    for (std::size_t i = 0; i < 60; ++i) {
        auto r = scan("s" + std::to_string(i), static_cast<std::uint8_t>(i));
        r.image = GrayImage(8, 8, static_cast<std::uint8_t>(i));
        r.label = i % 4 == 0 ? Label::kNormal : Label::kPneumonia;
        recs.push_back(r);
    }
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto [train, test] = split(recs, {0.2, seed});
        AugmentConfig ac;
        ac.seed = seed;
        auto expanded = expand_with_augmentation(rebalance(train, 0.5, seed), ac, 1);
        auto test_ids = ids(test);
        for (const auto& r : expanded.records) {
            CHECK_FALSE(test_ids.count(r.id));
            CHECK_FALSE(test_ids.count(r.origin_id()));
        }
    }
}

TEST_CASE("augmentation multiplies the set and references sources") {
    std::vector<ScanRecord> recs;
    for (int i = 0; i < 100; ++i) {
        ScanRecord r;
        r.id = "a" + std::to_string(i);
        r.image = GrayImage(16, 16, static_cast<std::uint8_t>(i));
        r.label = Label::kNormal;
        recs.push_back(r);
    }
    RecordSet train{SetRole::kTrain, recs};
    auto out = expand_with_augmentation(train, AugmentConfig{}, 7);
    CHECK(out.size() == 800);
    auto orig = ids(train);
    std::size_t derived = 0;
    for (const auto& r : out.records)
        if (!r.source_id.empty()) {
            ++derived;
            CHECK(orig.count(r.source_id));
        }
    CHECK(derived == 700);
    CHECK(expand_with_augmentation(train, AugmentConfig{}, 0).size() == 100);
}

TEST_CASE("sidecar round trip with diversity fields") {
    ScanRecord r;
    r.id = "x-1";
    r.label = Label::kPneumonia;
    r.confirmed = true;
    r.section = Section::kPublic;
    r.batch = Batch::kUsed;
    r.diversity.hospital = "St. Anne";
    r.diversity.age = 61;
    r.diversity.scanner_brand = "Acme";
    auto back = decode_sidecar(encode_sidecar(r));
    CHECK(back.id == r.id);
    CHECK(back.label == r.label);
    CHECK(back.confirmed);
    CHECK(back.section == Section::kPublic);
    CHECK(back.batch == Batch::kUsed);
    CHECK(back.diversity == r.diversity);
}

TEST_CASE("scan ids are restricted to a safe alphabet") {
    CHECK(valid_scan_id("edge-12.a_b"));
    CHECK_FALSE(valid_scan_id(""));
    CHECK_FALSE(valid_scan_id("../etc"));
    CHECK_FALSE(valid_scan_id("a b"));
    CHECK_FALSE(valid_scan_id(std::string(65, 'a')));
}

TEST_CASE("labelled directory loader") {
    test::TempDir dir("load");
    std::filesystem::create_directories(dir / "train/NORMAL");
    std::filesystem::create_directories(dir / "train/PNEUMONIA");
    std::filesystem::create_directories(dir / "other");
    write_pgm(dir / "train/NORMAL/a.pgm", GrayImage(300, 200, 200));
    write_pgm(dir / "train/PNEUMONIA/b c.pgm", GrayImage(64, 64, 10));
    write_pgm(dir / "other/z.pgm", GrayImage(64, 64, 10));
    auto recs = load_labeled_directory(dir.path(), {});
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].label == Label::kNormal);
    CHECK(recs[0].image.width() == 128);
    CHECK(recs[1].id == "train_PNEUMONIA_b_c");
    CHECK(valid_scan_id(recs[1].id));
    CHECK_THROWS_AS(load_labeled_directory(dir / "missing", {}), Error);
}

}  // TEST_SUITE

TEST_SUITE("scan_store") {

TEST_CASE("ingest is idempotent and counts the update batch") {
    test::TempDir dir("store");
    ScanStore store(dir.path());
    CHECK(store.ingest(scan("a")) == ScanStore::IngestResult::kStored);
    CHECK(store.ingest(scan("a", 9)) == ScanStore::IngestResult::kDuplicate);
    CHECK(store.size() == 1);
    CHECK(store.get("a")->image.at(0, 0) == 7);
    CHECK(store.update_batch_size() == 0);
    CHECK(store.pending_count() == 1);
    CHECK(store.set_label("a", Label::kPneumonia, true));
    CHECK_FALSE(store.set_label("a", Label::kPneumonia, true));
    CHECK(store.update_batch_size() == 1);
    CHECK_THROWS_AS(store.set_label("missing", Label::kNormal, true), Error);
}

TEST_CASE("wrong dimensions and bad ids are rejected") {
    test::TempDir dir("store");
    ScanStore store(dir.path());
    auto r = scan("a");
    r.image = GrayImage(64, 64);
    CHECK_THROWS_AS(store.ingest(r), Error);
    CHECK_THROWS_AS(store.ingest(scan("../x")), Error);
    CHECK(store.size() == 0);
}

TEST_CASE("consumed batch moves to used and survives reopen") {
    test::TempDir dir("store");
    {
        ScanStore store(dir.path());
        for (auto id : {"a", "b", "c"}) {
            store.ingest(scan(id));
            store.set_label(id, Label::kNormal, true);
        }
        CHECK(store.update_batch_ids() == std::vector<std::string>{"a", "b", "c"});
        store.mark_used({"a", "b"});
        CHECK(store.update_batch_size() == 1);
    }
    ScanStore again(dir.path());
    CHECK(again.size() == 3);
    CHECK(again.update_batch_ids() == std::vector<std::string>{"c"});
    auto list = again.list();
    REQUIRE(list.size() == 3);
    CHECK(list[0].batch == Batch::kUsed);
    CHECK(list[2].batch == Batch::kUpdate);
    CHECK(again.training_records().size() == 3);
}

TEST_CASE("public export copies only public rasters byte for byte") {
    test::TempDir dir("store");
    ScanStore store(dir.path());
    CHECK(store.export_public(dir / "empty").empty());
    CHECK(read_text_file(dir / "empty/manifest.tsv").find("pub") == std::string::npos);
    for (int i = 0; i < 5; ++i) {
        auto r = scan("pub" + std::to_string(i), static_cast<std::uint8_t>(i));
        r.section = Section::kPublic;
        store.ingest(r);
    }
    for (int i = 0; i < 3; ++i) store.ingest(scan("priv" + std::to_string(i)));
    auto out = store.export_public(dir / "export");
    CHECK(out.size() == 5);
    for (const auto& e : out) {
        CHECK(e.id.rfind("pub", 0) == 0);
        CHECK(read_file(dir / ("export/" + e.id + ".pgm")) == read_file(dir / ("scans/" + e.id + ".pgm")));
    }
    CHECK_FALSE(std::filesystem::exists(dir / "export/priv0.pgm"));
}

}  // TEST_SUITE
