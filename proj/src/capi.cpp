// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/cxr.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <set>
#include <sstream>

#include "cxr/client.hpp"
#include "cxr/compress.hpp"
#include "cxr/dataset.hpp"
#include "cxr/error.hpp"
#include "cxr/http_api.hpp"
#include "cxr/ledger.hpp"
#include "cxr/metrics.hpp"
#include "cxr/saliency.hpp"
#include "cxr/scenario.hpp"
#include "cxr/server.hpp"
#include "cxr/synthetic.hpp"
#include "cxr/tcp.hpp"
#include "cxr/train.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

struct cxr_model {
    cxr::ModelArtifact model;
    bool compressed = false;
    cxr::Digest original_digest{};
};

struct cxr_server {
    cxr::ServerConfig cfg;
    std::string bind = "127.0.0.1";
    std::unique_ptr<cxr::ServerCore> core;
    std::unique_ptr<cxr::TcpServer> tcp;
};

struct cxr_client {
    std::unique_ptr<cxr::ClientDaemon> daemon;
    bool started = false;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
cxr_status guarded(Fn&& fn) {
    try {
        g_last_error.clear();
        fn();
        return CXR_OK;
    } catch (const cxr::Error& e) {
        g_last_error = e.what();
        return static_cast<cxr_status>(static_cast<int>(e.code()));
    } catch (const json::exception& e) {
        g_last_error = std::string("bad JSON: ") + e.what();
        return CXR_E_INVALID_ARGUMENT;
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return CXR_E_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return CXR_E_INTERNAL;
    }
}

void need(const void* p, const char* what) {
    cxr::require(p != nullptr, cxr::ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

void put_string(char** out, const std::string& s) {
    if (!out) return;
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.c_str(), s.size() + 1);
    *out = p;
}

void put_json(char** out, const json& j) { put_string(out, j.dump()); }

json parse_options(const char* text, const std::set<std::string>& allowed) {
    if (!text || !*text) return json::object();
    json j = json::parse(text);
    cxr::require(j.is_object(), cxr::ErrorCode::kInvalidArgument, "options must be a JSON object");
    for (const auto& [k, v] : j.items())
        cxr::require(allowed.count(k) > 0, cxr::ErrorCode::kInvalidArgument, "unknown option '" + k + "'");
    return j;
}

template <typename T>
T opt(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j[key].is_null()) return fallback;
    return j[key].get<T>();
}

// Full or compressed model; for compressed files the original digest is
// what the model was derived from.
cxr_model load_any(const fs::path& path) {
    auto bytes = cxr::read_file(path);
    cxr_model m;
    try {
        if (cxr::is_compressed_model(bytes)) {
            auto d = cxr::decompress_model(bytes);
            m.model = std::move(d.model);
            m.compressed = true;
            m.original_digest = d.original_digest;
        } else {
            m.model = cxr::ModelArtifact::deserialize(bytes);
            if (!m.model.sealed()) m.model.seal();
            m.original_digest = m.model.digest();
        }
    } catch (const cxr::Error& e) {
        cxr::fail(e.code(), path.string() + ": " + e.what());
    }
    return m;
}

json metrics_json(const cxr::ValMetrics& m) {
    return {{"loss", std::isfinite(m.loss) ? json(m.loss) : json(nullptr)},
            {"accuracy", m.accuracy},
            {"precision", m.precision},
            {"recall", m.recall}};
}

json class_json(const cxr::ClassMetrics& c) {
    return {{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
}

json classification_json(const cxr::ClassificationReport& r) {
    return {{"normal", class_json(r.normal())},
            {"pneumonia", class_json(r.pneumonia())},
            {"accuracy", r.accuracy},
            {"macro_avg", class_json(r.macro_avg)},
            {"weighted_avg", class_json(r.weighted_avg)},
            {"total", r.total},
            {"text", cxr::render_report_text(r)}};
}

json entry_json(const cxr::RegistryEntry& e) {
    return {{"version", e.version},
            {"digest", cxr::to_hex(e.digest)},
            {"compressed_digest", cxr::to_hex(e.compressed_digest)},
            {"compressed_size", e.compressed_size}};
}

cxr::ClientConfig client_config(const char* path, const char* overrides) {
    std::string text;
    if (path && *path) text = cxr::read_text_file(path) + "\n";
    if (overrides && *overrides) {
        json j = json::parse(overrides);
        cxr::require(j.is_object(), cxr::ErrorCode::kInvalidArgument, "overrides must be a JSON object");
        for (const auto& [k, v] : j.items()) {
            std::string s = v.is_string() ? v.get<std::string>() : v.dump();
            cxr::require(s.find('\n') == std::string::npos, cxr::ErrorCode::kInvalidArgument, "newline in override");
            text += k + "=" + s + "\n";
        }
    }
    return cxr::ClientConfig::parse(text);
}

}  // namespace

extern "C" {

const char* cxr_version(void) { return "1.0.0"; }

const char* cxr_last_error(void) { return g_last_error.c_str(); }

const char* cxr_status_name(cxr_status status) {
    if (status == CXR_OK) return "ok";
    if (status < CXR_E_INVALID_ARGUMENT || status > CXR_E_INTERNAL) return "unknown";
    return cxr::error_code_name(static_cast<cxr::ErrorCode>(status)).data();
}

void cxr_string_free(char* s) { std::free(s); }

cxr_status cxr_model_load(const char* path, cxr_model** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new cxr_model(load_any(path));
    });
}

void cxr_model_free(cxr_model* model) { delete model; }

cxr_status cxr_model_info(const cxr_model* model, char** json_out) {
    return guarded([&] {
        need(model, "model");
        const auto& m = model->model;
        put_json(json_out, {{"version", m.version()},
                            {"digest", cxr::to_hex(m.digest())},
                            {"original_digest", cxr::to_hex(model->original_digest)},
                            {"parent", cxr::to_hex(m.parent_digest())},
                            {"parameters", m.parameter_count()},
                            {"layers", m.layers().size()},
                            {"compressed", model->compressed},
                            {"metrics", metrics_json(m.metrics())}});
    });
}

cxr_status cxr_model_predict_pgm(const cxr_model* model, const char* pgm_path, double gamma, char** json_out) {
    return guarded([&] {
        need(model, "model");
        need(pgm_path, "pgm_path");
        cxr::PreprocessConfig pc;
        pc.gamma = gamma;
        pc.validate();
        auto img = cxr::preprocess(cxr::read_pgm(pgm_path), pc);
        auto out = cxr::forward(model->model,
                                cxr::normalize(img).reshaped({1, std::size_t{img.height()}, std::size_t{img.width()}, 1}));
        put_json(json_out, {{"probability", out[1]},
                            {"verdict", cxr::label_name(cxr::verdict_for(out[1]))},
                            {"model_version", model->model.version()}});
    });
}

cxr_status cxr_train(const char* options_json, char** report_json) {
    return guarded([&] {
        auto o = parse_options(options_json,
                               {"data_dir", "synthetic", "out", "seed", "epochs", "batch_size", "learning_rate",
                                "optimizer", "decay", "patience", "test_fraction", "rebalance", "augment_copies",
                                "gamma", "resume", "history_out"});
        auto seed = opt<std::uint64_t>(o, "seed", 0);
        cxr::PreprocessConfig pc;
        pc.gamma = opt<double>(o, "gamma", pc.gamma);
        pc.validate();

        std::vector<cxr::ScanRecord> records;
        std::string source;
        if (o.contains("data_dir")) {
            cxr::require(!o.contains("synthetic"), cxr::ErrorCode::kInvalidArgument,
                         "data_dir and synthetic are exclusive");
            source = o["data_dir"].get<std::string>();
            records = cxr::load_labeled_directory(source, pc);
        } else {
            auto n = opt<std::size_t>(o, "synthetic", 250);
            source = "synthetic:" + std::to_string(n);
            auto set = cxr::synthetic_disc_set(n, seed, pc.target_side, pc.gamma);
            for (std::size_t i = 0; i < set.size(); ++i) {
                cxr::ScanRecord r;
                char id[32];
                std::snprintf(id, sizeof id, "syn-%05zu", i);
                r.id = id;
                r.image = set.images[i];
                r.label = set.labels[i];
                r.confirmed = true;
                records.push_back(std::move(r));
            }
        }
        cxr::require(records.size() >= 4, cxr::ErrorCode::kInvalidArgument, "need at least 4 labelled images");

        cxr::SplitSpec sp;
        sp.test_fraction = opt<double>(o, "test_fraction", 0.2);
        sp.seed = seed;
        auto [train_rs, test_rs] = cxr::split(records, sp);
        auto ratio = opt<double>(o, "rebalance", 0.0);
        if (ratio > 0) train_rs = cxr::rebalance(train_rs, ratio, seed);
        auto copies = opt<std::size_t>(o, "augment_copies", 0);
        if (copies > 0) {
            cxr::AugmentConfig ac;
            ac.seed = seed;
            train_rs = cxr::expand_with_augmentation(train_rs, ac, copies);
        }
        auto train_set = cxr::to_image_set(train_rs);
        auto test_set = cxr::to_image_set(test_rs);

        cxr::TrainConfig tc;
        tc.seed = seed;
        tc.epochs = opt<std::size_t>(o, "epochs", tc.epochs);
        tc.batch_size = opt<std::size_t>(o, "batch_size", tc.batch_size);
        tc.learning_rate = opt<double>(o, "learning_rate", tc.learning_rate);
        tc.decay = opt<double>(o, "decay", tc.decay);
        tc.patience = opt<std::size_t>(o, "patience", tc.patience);
        auto optimizer = opt<std::string>(o, "optimizer", "adam");
        cxr::require(optimizer == "adam" || optimizer == "sgd", cxr::ErrorCode::kInvalidArgument,
                     "optimizer must be adam or sgd");
        tc.optimizer = optimizer == "adam" ? cxr::OptimizerKind::kAdam : cxr::OptimizerKind::kSgd;
        tc.validate();

        cxr::TrainResult result;
        std::optional<cxr::Digest> lineage;
        if (o.contains("resume")) {
            auto base = load_any(o["resume"].get<std::string>());
            result = cxr::transfer_retrain(base.model, train_set, test_set, tc);
            // A compressed parent is identified by the model it was made
            // from, so lineage survives a compress/resume round trip.
            lineage = base.original_digest;
            result.model.set_parent_digest(*lineage);
            result.model.seal();
        } else {
            result = cxr::train(cxr::ModelArtifact::reference(seed, pc.target_side), train_set, test_set, tc);
        }
        cxr::require(!result.diverged, cxr::ErrorCode::kDiverged, "training diverged: " + result.message);

        auto ev = cxr::evaluate(result.model, test_set);
        auto out = opt<std::string>(o, "out", "");
        if (!out.empty()) result.model.save(out);

        json history = json::array();
        std::string csv = "epoch,train_loss,val_loss,val_accuracy\n";
        for (const auto& h : result.history) {
            history.push_back(
                {{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_loss", h.val_loss}, {"val_accuracy", h.val_accuracy}});
            char line[160];
            std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g\n", h.epoch, h.train_loss, h.val_loss, h.val_accuracy);
            csv += line;
        }
        auto history_out = opt<std::string>(o, "history_out", "");
        if (!history_out.empty()) cxr::write_text_atomic(history_out, csv);

        put_json(report_json, {{"source", source},
                               {"train_records", train_set.size()},
                               {"test_records", test_set.size()},
                               {"epochs_run", result.history.size()},
                               {"best_epoch", result.best_epoch},
                               {"stopped_early", result.stopped_early},
                               {"digest", cxr::to_hex(result.model.digest())},
                               {"parent", cxr::to_hex(result.model.parent_digest())},
                               {"version", result.model.version()},
                               {"parameters", result.model.parameter_count()},
                               {"out", out},
                               {"report", classification_json(ev.report)},
                               {"roc_auc", cxr::roc_auc(ev.p_pneumonia, test_set.labels)},
                               {"history", history}});
    });
}

cxr_status cxr_compress(const char* in_path, const char* out_path, const char* options_json, char** report_json) {
    return guarded([&] {
        need(in_path, "in_path");
        need(out_path, "out_path");
        auto o = parse_options(options_json,
                               {"sparsity", "conv_bits", "dense_bits", "compress_biases", "per_tensor_sparsity"});
        cxr::CompressionConfig cc;
        cc.sparsity = opt<double>(o, "sparsity", cc.sparsity);
        cc.conv_bits = opt<std::uint32_t>(o, "conv_bits", cc.conv_bits);
        cc.dense_bits = opt<std::uint32_t>(o, "dense_bits", cc.dense_bits);
        cc.compress_biases = opt<bool>(o, "compress_biases", cc.compress_biases);
        cc.per_tensor_sparsity = opt<bool>(o, "per_tensor_sparsity", cc.per_tensor_sparsity);
        cc.validate();
        auto bytes = cxr::read_file(in_path);
        cxr::require(!cxr::is_compressed_model(bytes), cxr::ErrorCode::kInvalidArgument,
                     std::string(in_path) + " is already compressed");
        auto model = cxr::ModelArtifact::deserialize(bytes);
        if (!model.sealed()) model.seal();
        auto c = cxr::compress_model(model, cc);
        cxr::write_file_atomic(out_path, c.bytes);
        json tensors = json::array();
        for (const auto& t : c.tensors)
            tensors.push_back({{"index", t.index},
                               {"elements", t.elements},
                               {"survivors", t.survivors},
                               {"bits", t.bits},
                               {"codebook", t.codebook_size},
                               {"bytes", t.encoded_bytes},
                               {"mse", t.mse}});
        put_json(report_json, {{"original_size", c.original_size},
                               {"compressed_size", c.compressed_size},
                               {"ratio", c.ratio()},
                               {"original_digest", cxr::to_hex(c.original_digest)},
                               {"reconstructed_digest", cxr::to_hex(c.reconstructed_digest)},
                               {"compressed_digest", cxr::to_hex(c.compressed_digest)},
                               {"tensors", tensors}});
    });
}

cxr_status cxr_report(const char* predictions_path, char** report_json) {
    return guarded([&] {
        need(predictions_path, "predictions_path");
        std::istringstream in(cxr::read_text_file(predictions_path));
        std::vector<cxr::Label> labels, preds;
        std::vector<double> scores;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
            std::istringstream f(line);
            std::vector<std::string> cols;
            for (std::string c; f >> c;) cols.push_back(c);
            if (cols.empty()) continue;
            auto where = std::string(predictions_path) + ":" + std::to_string(lineno);
            cxr::require(cols.size() == 2 || cols.size() == 3, cxr::ErrorCode::kFormat,
                         where + ": expected [id] label probability");
            const auto& ls = cols[cols.size() - 2];
            std::optional<cxr::Label> l;
            if (ls == "0") l = cxr::Label::kNormal;
            else if (ls == "1") l = cxr::Label::kPneumonia;
            else l = cxr::label_from_name(ls);
            cxr::require(l && *l != cxr::Label::kUnlabeled, cxr::ErrorCode::kFormat, where + ": bad label '" + ls + "'");
            double p = 0;
            try {
                std::size_t used = 0;
                p = std::stod(cols.back(), &used);
                cxr::require(used == cols.back().size(), cxr::ErrorCode::kFormat, "");
            } catch (...) {
                cxr::fail(cxr::ErrorCode::kFormat, where + ": bad probability '" + cols.back() + "'");
            }
            cxr::require(p >= 0 && p <= 1, cxr::ErrorCode::kFormat, where + ": probability outside [0, 1]");
            labels.push_back(*l);
            scores.push_back(p);
            preds.push_back(cxr::verdict_for(p));
        }
        cxr::require(!labels.empty(), cxr::ErrorCode::kFormat, "no predictions in file");
        auto r = cxr::report(cxr::confusion(labels, preds));
        bool both = std::count(labels.begin(), labels.end(), cxr::Label::kNormal) > 0 &&
                    std::count(labels.begin(), labels.end(), cxr::Label::kPneumonia) > 0;
        put_json(report_json, {{"report", classification_json(r)},
                               {"roc_auc", both ? json(cxr::roc_auc(scores, labels)) : json(nullptr)}});
    });
}

cxr_status cxr_heatmap(const char* model_path, const char* image_path, const char* out_pgm, const char* options_json,
                       char** report_json) {
    return guarded([&] {
        need(model_path, "model_path");
        need(image_path, "image_path");
        need(out_pgm, "out_pgm");
        auto o = parse_options(options_json, {"gamma", "patch", "stride", "mode", "preprocessed"});
        auto m = load_any(model_path);
        auto img = cxr::read_pgm(image_path);
        if (!opt<bool>(o, "preprocessed", false)) {
            cxr::PreprocessConfig pc;
            pc.gamma = opt<double>(o, "gamma", pc.gamma);
            pc.validate();
            img = cxr::preprocess(img, pc);
        }
        cxr::OcclusionConfig oc;
        oc.patch = opt<std::uint32_t>(o, "patch", oc.patch);
        oc.stride = opt<std::uint32_t>(o, "stride", oc.stride);
        auto mode = opt<std::string>(o, "mode", "overlay");
        cxr::require(mode == "overlay" || mode == "map", cxr::ErrorCode::kInvalidArgument, "mode must be overlay or map");
        auto h = cxr::occlusion_heatmap(m.model, img, cxr::Label::kPneumonia, oc);
        cxr::write_pgm(out_pgm, mode == "overlay" ? cxr::heatmap_overlay(img, h) : cxr::heatmap_image(h));
        auto out = cxr::forward(m.model,
                                cxr::normalize(img).reshaped({1, std::size_t{img.height()}, std::size_t{img.width()}, 1}));
        put_json(report_json, {{"out", out_pgm},
                               {"probability", out[1]},
                               {"verdict", cxr::label_name(cxr::verdict_for(out[1]))},
                               {"evaluations", h.evaluations},
                               {"degenerate", h.degenerate}});
    });
}

cxr_status cxr_simulate(const char* script_path, const char* workdir, char** result_json) {
    return guarded([&] {
        need(script_path, "script_path");
        need(workdir, "workdir");
        auto sc = cxr::load_scenario(script_path);
        auto r = cxr::run_scenario(sc, workdir);
        json j = {{"events", r.event_log()},
                  {"summary", r.summary()},
                  {"scans", r.scans},
                  {"served_server", r.served_server},
                  {"served_local", r.served_local},
                  {"cache_depth_end", r.cache_depth_end},
                  {"installs", r.installs},
                  {"model_bytes_down", r.model_bytes_down},
                  {"client_matches_server", r.client_matches_server},
                  {"ledger_consistent", r.ledger_consistent},
                  {"bytes_up", r.ledger.bytes_up},
                  {"bytes_down", r.ledger.bytes_down},
                  {"peak_kbps", r.max_window_kbps},
                  {"end_time", r.end_time}};
        j["weekly_total_kb"] = r.weekly_total_kb ? json(*r.weekly_total_kb) : json(nullptr);
        put_json(result_json, j);
    });
}

cxr_status cxr_ledger_weekly_total(double scans_per_day, double per_scan_kb, double overhead_kb,
                                   double updates_per_week, double model_mb, double* kb_out) {
    return guarded([&] {
        need(kb_out, "kb_out");
        for (double v : {scans_per_day, per_scan_kb, overhead_kb, updates_per_week, model_mb})
            cxr::require(std::isfinite(v) && v >= 0, cxr::ErrorCode::kInvalidArgument,
                         "ledger inputs must be finite and non-negative");
        *kb_out = cxr::ledger_weekly_total(scans_per_day, per_scan_kb, overhead_kb, updates_per_week, model_mb);
    });
}

cxr_status cxr_server_open(const char* config_json, cxr_server** out) {
    return guarded([&] {
        need(out, "out");
        auto o = parse_options(config_json, {"storage_root", "port", "bind", "section", "retrain_threshold", "metric",
                                             "beta", "auto_retrain", "epochs", "seed"});
        auto s = std::make_unique<cxr_server>();
        auto& c = s->cfg;
        c.storage_root = opt<std::string>(o, "storage_root", c.storage_root.string());
        c.port = opt<std::uint16_t>(o, "port", c.port);
        s->bind = opt<std::string>(o, "bind", s->bind);
        auto section = cxr::section_from_name(opt<std::string>(o, "section", "private"));
        cxr::require(section.has_value(), cxr::ErrorCode::kInvalidArgument, "section must be public or private");
        c.default_section = *section;
        c.policy.threshold = opt<std::size_t>(o, "retrain_threshold", c.policy.threshold);
        auto metric = opt<std::string>(o, "metric", "f_beta");
        cxr::require(metric == "f_beta" || metric == "accuracy", cxr::ErrorCode::kInvalidArgument,
                     "metric must be f_beta or accuracy");
        c.policy.metric = metric == "f_beta" ? cxr::PolicyMetric::kFBeta : cxr::PolicyMetric::kAccuracy;
        c.policy.beta = opt<double>(o, "beta", c.policy.beta);
        c.auto_retrain = opt<bool>(o, "auto_retrain", c.auto_retrain);
        c.train.epochs = opt<std::size_t>(o, "epochs", 20);
        c.train.patience = std::min<std::size_t>(c.train.patience, 5);
        c.seed = opt<std::uint64_t>(o, "seed", 0);
        c.apply_env();
        c.policy.validate();
        s->core = std::make_unique<cxr::ServerCore>(c);
        *out = s.release();
    });
}

void cxr_server_free(cxr_server* server) {
    if (!server) return;
    if (server->tcp) server->tcp->stop();
    delete server;
}

cxr_status cxr_server_publish(cxr_server* server, const char* model_path, char** json_out) {
    return guarded([&] {
        need(server, "server");
        need(model_path, "model_path");
        auto m = load_any(model_path);
        cxr::require(!m.compressed, cxr::ErrorCode::kInvalidArgument,
                     "the server serves full models; publish the uncompressed artifact");
        put_json(json_out, entry_json(server->core->publish(std::move(m.model))));
    });
}

cxr_status cxr_server_set_holdout(cxr_server* server, const char* dir) {
    return guarded([&] {
        need(server, "server");
        need(dir, "dir");
        auto recs = cxr::load_labeled_directory(dir, {});
        cxr::ImageSet set;
        for (auto& r : recs) set.add(std::move(r.image), r.label);
        cxr::require(set.size() > 0, cxr::ErrorCode::kInvalidArgument, "holdout directory has no images");
        server->core->set_holdout(set);
    });
}

cxr_status cxr_server_start(cxr_server* server, uint16_t* port_out) {
    return guarded([&] {
        need(server, "server");
        cxr::require(!server->tcp, cxr::ErrorCode::kInvalidArgument, "server already started");
        server->tcp = std::make_unique<cxr::TcpServer>(*server->core, server->cfg.port, server->bind);
        server->tcp->start();
        if (port_out) *port_out = server->tcp->port();
    });
}

cxr_status cxr_server_stop(cxr_server* server) {
    return guarded([&] {
        need(server, "server");
        if (server->tcp) server->tcp->stop();
        server->tcp.reset();
    });
}

cxr_status cxr_server_status(cxr_server* server, char** json_out) {
    return guarded([&] {
        need(server, "server");
        auto& core = *server->core;
        json versions = json::array();
        for (const auto& e : core.registry().versions()) versions.push_back(entry_json(e));
        auto active = core.registry().active();
        put_json(json_out, {{"active", active ? entry_json(active->entry) : json(nullptr)},
                            {"versions", versions},
                            {"records", core.store().size()},
                            {"update_batch", core.store().update_batch_size()},
                            {"predictions_served", core.predictions_served()},
                            {"holdout", core.has_holdout()},
                            {"port", server->tcp ? server->tcp->port() : 0}});
    });
}

cxr_status cxr_server_retrain(cxr_server* server, int force, char** json_out) {
    return guarded([&] {
        need(server, "server");
        auto r = server->core->retrain_and_maybe_replace(force != 0);
        put_json(json_out, {{"ran", r.ran},
                            {"replaced", r.replaced},
                            {"diverged", r.diverged},
                            {"version_before", r.version_before},
                            {"version_after", r.version_after},
                            {"active_score", r.active_score},
                            {"candidate_score", r.candidate_score},
                            {"update_records", r.update_records},
                            {"train_records", r.train_records},
                            {"epochs", r.epochs},
                            {"message", r.message}});
    });
}

cxr_status cxr_server_export(cxr_server* server, const char* out_dir, char** json_out) {
    return guarded([&] {
        need(server, "server");
        need(out_dir, "out_dir");
        auto entries = server->core->export_public(out_dir);
        put_json(json_out, {{"exported", entries.size()}, {"manifest", (fs::path(out_dir) / "manifest.tsv").string()}});
    });
}

cxr_status cxr_client_open(const char* config_path, const char* overrides_json, cxr_client** out) {
    return guarded([&] {
        need(out, "out");
        auto c = std::make_unique<cxr_client>();
        c->daemon = std::make_unique<cxr::ClientDaemon>(client_config(config_path, overrides_json));
        *out = c.release();
    });
}

void cxr_client_free(cxr_client* client) {
    if (!client) return;
    client->daemon->stop();
    delete client;
}

cxr_status cxr_client_provision(cxr_client* client, const char* cxrc_path) {
    return guarded([&] {
        need(client, "client");
        need(cxrc_path, "cxrc_path");
        client->daemon->client().provision(cxr::read_file(cxrc_path));
    });
}

cxr_status cxr_client_start(cxr_client* client, uint16_t* http_port_out) {
    return guarded([&] {
        need(client, "client");
        cxr::require(!client->started, cxr::ErrorCode::kInvalidArgument, "client already started");
        client->daemon->start();
        client->started = true;
        if (http_port_out) *http_port_out = client->daemon->port();
    });
}

cxr_status cxr_client_stop(cxr_client* client) {
    return guarded([&] {
        need(client, "client");
        client->daemon->stop();
    });
}

cxr_status cxr_client_status(cxr_client* client, char** json_out) {
    return guarded([&] {
        need(client, "client");
        cxr::ClientApi api(client->daemon->client());
        put_string(json_out, api.status().body);
    });
}

}  // extern "C"
