// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/http_api.hpp"

#include <httplib.h>

#include <chrono>
#include <json.hpp>

#include "cxr/error.hpp"
#include "cxr/saliency.hpp"
#include "cxr/tcp.hpp"

namespace cxr {

using nlohmann::json;

namespace {

ApiReply json_reply(int status, const json& j) { return {status, "application/json", j.dump()}; }

ApiReply error_reply(int status, const std::string& code, const std::string& message) {
    return json_reply(status, {{"error", code}, {"message", message}});
}

int http_status_for(ErrorCode c) {
    switch (c) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kUnavailable: return 503;
    case ErrorCode::kTimeout: return 504;
    case ErrorCode::kIo:
    case ErrorCode::kInternal: return 500;
    default: return 400;
    }
}

ApiReply from_error(const Error& e) {
    return error_reply(http_status_for(e.code()), std::string(error_code_name(e.code())), e.what());
}

json scan_json(const ScanResult& r) {
    return {{"id", r.id},
            {"probability", r.probability},
            {"verdict", label_name(r.verdict)},
            {"source", scan_source_name(r.source)},
            {"model_version", r.model_version},
            {"model_recall", r.recall},
            {"model_precision", r.precision}};
}

}  // namespace

ApiReply ClientApi::scan(const std::string& body, const std::map<std::string, std::string>& query) {
    try {
        GrayImage img;
        try {
            img = decode_pgm(as_bytes(body));
        } catch (const Error& e) {
            return error_reply(415, "unsupported_image", e.what());
        }
        Metadata md;
        std::optional<std::string> id;
        for (const auto& [k, v] : query) {
            if (k == "id") id = v;
            else md[k] = v;
        }
        return json_reply(200, scan_json(client_.handle_scan(img, md, id)));
    } catch (const Error& e) {
        return from_error(e);
    }
}

ApiReply ClientApi::confirm(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("confirmed") ||
        !j["confirmed"].is_boolean())
        return error_reply(400, "bad_request", "expected {\"id\": string, \"confirmed\": bool}");
    auto id = j["id"].get<std::string>();
    bool confirmed = j["confirmed"].get<bool>();
    try {
        bool changed = client_.record_confirmation(id, confirmed);
        return json_reply(200, {{"id", id},
                                {"confirmed", confirmed},
                                {"changed", changed},
                                {"queued", client_.cache().has_pending(id)}});
    } catch (const Error& e) {
        return from_error(e);
    }
}

ApiReply ClientApi::status() {
    auto s = client_.status();
    json j = {{"online", s.online},
              {"cache_depth", s.cache_depth},
              {"has_model", s.has_model},
              {"model_version", s.model_version},
              {"model_digest", s.has_model ? to_hex(s.model_digest) : ""},
              {"model_recall", s.model_recall},
              {"model_precision", s.model_precision},
              {"download", {{"offset", s.download_offset}, {"total", s.download_total}}},
              {"ledger",
               {{"bytes_up", s.ledger.bytes_up},
                {"bytes_down", s.ledger.bytes_down},
                {"frames_up", s.ledger.frames_up},
                {"frames_down", s.ledger.frames_down},
                {"model_bytes_down", s.ledger.model_bytes_down},
                {"scans_up", s.ledger.scans_up}}}};
    return json_reply(200, j);
}

ApiReply ClientApi::scans() {
    json arr = json::array();
    for (const auto& e : client_.evaluated_scans()) {
        json j = scan_json(e.result);
        j["confirmed"] = e.confirmed ? json(*e.confirmed) : json(nullptr);
        j["delivered"] = e.delivered;
        j["queued"] = client_.cache().has_pending(e.result.id);
        if (e.server_probability) {
            j["server_probability"] = *e.server_probability;
            j["server_verdict"] = label_name(*e.server_verdict);
        }
        j["disagreement"] = e.disagreement;
        arr.push_back(j);
    }
    return json_reply(200, {{"scans", arr}});
}

ApiReply ClientApi::heatmap(const std::string& id, const std::string& format) {
    if (format != "pgm" && format != "heatmap" && format != "json")
        return error_reply(400, "bad_request", "format must be pgm, heatmap or json");
    auto img = client_.scan_image(id);
    if (!img) return error_reply(404, "not_found", "unknown scan id '" + id + "'");
    auto model = client_.local_model();
    if (!model) return error_reply(503, "unavailable", "no local model installed");
    try {
        auto h = occlusion_heatmap(*model, *img, Label::kPneumonia);
        if (format == "json")
            return json_reply(200, {{"id", id},
                                    {"width", h.width},
                                    {"height", h.height},
                                    {"degenerate", h.degenerate},
                                    {"values", h.values}});
        auto out = encode_pgm(format == "pgm" ? heatmap_overlay(*img, h) : heatmap_image(h));
        return {200, "image/x-portable-graymap", std::string(out.begin(), out.end())};
    } catch (const Error& e) {
        return from_error(e);
    }
}

struct ClientDaemon::Http {
    httplib::Server server;
};

ClientDaemon::ClientDaemon(ClientConfig cfg)
    : ClientDaemon(std::make_unique<Client>(cfg, [host = cfg.server_host, port = cfg.server_port](BandwidthLedger* l) {
          return std::make_unique<TcpTransport>(host, port, l);
      })) {}

ClientDaemon::ClientDaemon(std::unique_ptr<Client> client)
    : client_(std::move(client)), api_(*client_), http_(std::make_unique<Http>()) {
    auto& s = http_->server;
    auto send = [](httplib::Response& res, const ApiReply& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    s.Post("/api/scan", [this, send](const httplib::Request& req, httplib::Response& res) {
        std::map<std::string, std::string> q;
        for (const auto& [k, v] : req.params) q[k] = v;
        send(res, api_.scan(req.body, q));
        if (client_->wants_sync()) request_sync();
    });
    s.Post("/api/confirm", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, api_.confirm(req.body));
    });
    s.Get("/api/status", [this, send](const httplib::Request&, httplib::Response& res) { send(res, api_.status()); });
    s.Get("/api/scans", [this, send](const httplib::Request&, httplib::Response& res) { send(res, api_.scans()); });
    s.Get("/api/heatmap", [this, send](const httplib::Request& req, httplib::Response& res) {
        auto format = req.has_param("format") ? req.get_param_value("format") : "pgm";
        send(res, api_.heatmap(req.get_param_value("id"), format));
    });
    s.Post("/api/sync", [this, send](const httplib::Request&, httplib::Response& res) {
        request_sync();
        send(res, {202, "application/json", "{\"requested\":true}"});
    });
    auto static_dir = client_->config().static_dir;
    if (!static_dir.empty()) s.set_mount_point("/", static_dir.string());
}

ClientDaemon::~ClientDaemon() { stop(); }

void ClientDaemon::start() {
    const auto& cfg = client_->config();
    auto& s = http_->server;
    int p = cfg.http_port == 0 ? s.bind_to_any_port(cfg.http_bind)
                               : (s.bind_to_port(cfg.http_bind, cfg.http_port) ? cfg.http_port : -1);
    require(p > 0, ErrorCode::kIo, "cannot bind " + cfg.http_bind + ":" + std::to_string(cfg.http_port));
    port_ = static_cast<std::uint16_t>(p);
    server_thread_ = std::thread([this] { http_->server.listen_after_bind(); });
    http_->server.wait_until_ready();
    sync_thread_ = std::thread([this] { sync_loop(); });
    request_sync();
}

void ClientDaemon::stop() {
    {
        std::lock_guard lock(mu_);
        stop_ = true;
    }
    cv_.notify_all();
    if (http_) http_->server.stop();
    if (server_thread_.joinable()) server_thread_.join();
    if (sync_thread_.joinable()) sync_thread_.join();
}

void ClientDaemon::request_sync() {
    {
        std::lock_guard lock(mu_);
        sync_requested_ = true;
    }
    cv_.notify_all();
}

void ClientDaemon::sync_loop() {
    using namespace std::chrono;
    const auto& cfg = client_->config();
    auto interval = duration<double>(cfg.sync_interval_s);
    for (;;) {
        {
            std::unique_lock lock(mu_);
            // Offline clients probe once a minute so reconnects are noticed.
            auto wait = client_->online() ? interval : std::min(interval, duration<double>(60.0));
            cv_.wait_for(lock, wait, [this] { return stop_ || sync_requested_; });
            if (stop_) return;
            sync_requested_ = false;
        }
        try {
            client_->sync_cycle();
        } catch (const std::exception&) {
            // Nothing is lost: the cache and partial download are durable.
        }
        ++cycles_;
        if (client_->wants_sync()) request_sync();
    }
}

}  // namespace cxr
