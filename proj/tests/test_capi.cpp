// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

// Exercises the shared library through its C header only.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <string>

#include "cxr/cxr.h"
#include "test_util.hpp"

using nlohmann::json;

namespace {

// Takes ownership of a string returned by the library.
json take(char* s) {
    REQUIRE(s != nullptr);
    auto j = json::parse(s);
    cxr_string_free(s);
    return j;
}

void write_pgm(const std::string& path, int w, int h, unsigned char fill) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    REQUIRE(f);
    std::fprintf(f, "P5\n%d %d\n255\n", w, h);
    for (int i = 0; i < w * h; ++i) std::fputc(fill, f);
    std::fclose(f);
}

}  // namespace

TEST_CASE("basics and error reporting") {
    CHECK(std::string(cxr_version()) == "1.0.0");
    CHECK(std::string(cxr_status_name(CXR_OK)) == "ok");
    CHECK(std::string(cxr_status_name(static_cast<cxr_status>(99))) == "unknown");
    double kb = 0;
    CHECK(cxr_ledger_weekly_total(100, 17, 1, 1, 5, &kb) == CXR_OK);
    CHECK(kb == 17720.0);

    cxr_model* m = nullptr;
    CHECK(cxr_model_load("/nonexistent/model.cxrm", &m) != CXR_OK);
    CHECK(m == nullptr);
    CHECK(std::string(cxr_last_error()).find("nonexistent") != std::string::npos);
    char* out = nullptr;
    CHECK(cxr_train("{not json", &out) == CXR_E_INVALID_ARGUMENT);
    CHECK(cxr_train(R"({"synthetic": 10, "colour": 1})", &out) == CXR_E_INVALID_ARGUMENT);
    CHECK(out == nullptr);
}

TEST_CASE("train, compress, load, predict, report") {
    cxr::test::TempDir dir("capi");
    auto model = (dir / "m.cxrm").string();
    char* out = nullptr;
    json opts = {{"synthetic", 20}, {"epochs", 1}, {"patience", 1}, {"batch_size", 8}, {"out", model},
                 {"history_out", (dir / "h.csv").string()}};
    REQUIRE(cxr_train(opts.dump().c_str(), &out) == CXR_OK);
    auto rep = take(out);
    CHECK(rep["train_records"] == 16);
    CHECK(rep["test_records"] == 4);
    CHECK(rep["parameters"] == 826306);
    CHECK(rep["history"].size() == 1);
    CHECK(std::filesystem::exists(dir / "h.csv"));

    auto packed = (dir / "m.cxrc").string();
    REQUIRE(cxr_compress(model.c_str(), packed.c_str(), nullptr, &out) == CXR_OK);
    auto crep = take(out);
    CHECK(crep["ratio"].get<double>() >= 10.0);

    cxr_model* m = nullptr;
    REQUIRE(cxr_model_load(packed.c_str(), &m) == CXR_OK);
    REQUIRE(cxr_model_info(m, &out) == CXR_OK);
    auto info = take(out);
    CHECK(info["compressed"] == true);
    auto img = (dir / "x.pgm").string();
    write_pgm(img, 300, 240, 180);
    REQUIRE(cxr_model_predict_pgm(m, img.c_str(), 2.4, &out) == CXR_OK);
    auto p = take(out);
    CHECK(p["probability"].get<double>() >= 0.0);
    CHECK(p["probability"].get<double>() <= 1.0);
    cxr_model_free(m);

    auto preds = (dir / "p.txt").string();
    {
        std::FILE* f = std::fopen(preds.c_str(), "w");
        std::fputs("# id label p\na NORMAL 0.1\nb PNEUMONIA 0.9\nc 1 0.8\nd 0 0.3\n", f);
        std::fclose(f);
    }
    REQUIRE(cxr_report(preds.c_str(), &out) == CXR_OK);
    auto r = take(out);
    CHECK(r["report"]["accuracy"] == 1.0);
    CHECK(r["roc_auc"] == 1.0);

    auto heat = (dir / "h.pgm").string();
    REQUIRE(cxr_heatmap(model.c_str(), img.c_str(), heat.c_str(), R"({"patch": 32, "stride": 32})", &out) == CXR_OK);
    take(out);
    CHECK(std::filesystem::exists(heat));
}

TEST_CASE("simulate") {
    cxr::test::TempDir dir("capi");
    char* out = nullptr;
    auto script = (cxr::test::source_dir() / "scenarios" / "offline.txt").string();
    REQUIRE(cxr_simulate(script.c_str(), (dir / "w").string().c_str(), &out) == CXR_OK);
    auto j = take(out);
    CHECK(j["served_local"] == 3);
    CHECK(j["ledger_consistent"] == true);
    CHECK(cxr_simulate("/nonexistent.txt", (dir / "w2").string().c_str(), &out) != CXR_OK);
}

TEST_CASE("server and client handles") {
    cxr::test::TempDir dir("capi");
    char* out = nullptr;
    auto model = (dir / "m.cxrm").string();
    json opts = {{"synthetic", 10}, {"epochs", 1}, {"patience", 1}, {"out", model}};
    REQUIRE(cxr_train(opts.dump().c_str(), &out) == CXR_OK);
    take(out);

    cxr_server* s = nullptr;
    json sc = {{"storage_root", (dir / "server").string()}, {"port", 0}};
    REQUIRE(cxr_server_open(sc.dump().c_str(), &s) == CXR_OK);
    REQUIRE(cxr_server_publish(s, model.c_str(), &out) == CXR_OK);
    auto pub = take(out);
    CHECK(pub["version"] == 1);
    std::uint16_t port = 0;
    REQUIRE(cxr_server_start(s, &port) == CXR_OK);
    CHECK(port != 0);
    REQUIRE(cxr_server_status(s, &out) == CXR_OK);
    auto st = take(out);
    CHECK(st["active"]["version"] == 1);
    CHECK(cxr_server_retrain(s, 1, &out) == CXR_OK);
    auto rt = take(out);
    CHECK(rt["ran"] == false);

    auto cxrc = (dir / "m.cxrc").string();
    REQUIRE(cxr_compress(model.c_str(), cxrc.c_str(), nullptr, &out) == CXR_OK);
    take(out);
    cxr_client* c = nullptr;
    json co = {{"storage", (dir / "client").string()}, {"server_port", port}, {"http_port", 0}};
    REQUIRE(cxr_client_open(nullptr, co.dump().c_str(), &c) == CXR_OK);
    REQUIRE(cxr_client_provision(c, cxrc.c_str()) == CXR_OK);
    std::uint16_t http = 0;
    REQUIRE(cxr_client_start(c, &http) == CXR_OK);
    CHECK(http != 0);
    REQUIRE(cxr_client_status(c, &out) == CXR_OK);
    auto cs = take(out);
    CHECK(cs["has_model"] == true);
    CHECK(cxr_client_start(c, &http) == CXR_E_INVALID_ARGUMENT);
    CHECK(cxr_client_stop(c) == CXR_OK);
    cxr_client_free(c);

    CHECK(cxr_server_stop(s) == CXR_OK);
    cxr_server_free(s);

    CHECK(cxr_client_open(nullptr, R"({"bogus": 1})", &c) == CXR_E_INVALID_ARGUMENT);
}
