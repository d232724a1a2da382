// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/server.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "cxr/binary_io.hpp"
#include "cxr/error.hpp"
#include "cxr/metrics.hpp"

namespace cxr {

namespace fs = std::filesystem;

namespace {

Frame error_frame(Reason r, const std::string& text) { return make_frame(ErrorMsg{r, text}); }

Reason reason_of(const Error& e) {
    std::string_view what = e.what();
    for (int i = 1; i <= 10; ++i) {
        auto r = static_cast<Reason>(i);
        auto name = reason_name(r);
        if (what.substr(0, name.size()) == name) return r;
    }
    switch (e.code()) {
    case ErrorCode::kNotFound: return Reason::kNotFound;
    case ErrorCode::kUnavailable: return Reason::kUnavailable;
    case ErrorCode::kProtocol:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kFormat: return Reason::kBadPayload;
    default: return Reason::kInternal;
    }
}

DiversityMeta diversity_from(const Metadata& md) {
    DiversityMeta d;
    auto get = [&](const char* k) -> std::optional<std::string> {
        auto it = md.find(k);
        if (it == md.end() || it->second.empty()) return std::nullopt;
        return it->second;
    };
    d.hospital = get("hospital");
    d.geography = get("geography");
    d.sex = get("sex");
    d.scanner_brand = get("scanner_brand");
    if (auto a = get("age")) {
        try {
            d.age = static_cast<std::uint32_t>(std::stoul(*a));
        } catch (...) {
        }
    }
    return d;
}

ImageSet records_to_set(const std::vector<ScanRecord>& rs) {
    ImageSet s;
    for (const auto& r : rs) s.add(r.image, r.label);
    return s;
}

}  // namespace

void RetrainPolicy::validate() const {
    require(threshold >= 1, ErrorCode::kInvalidArgument, "retrain threshold must be at least 1");
    require(beta > 0.0, ErrorCode::kInvalidArgument, "policy beta must be positive");
}

void ServerConfig::apply_env() {
    if (const char* root = std::getenv("CXR_STORAGE_ROOT"); root && *root) storage_root = root;
    if (const char* port_s = std::getenv("CXR_SERVER_PORT"); port_s && *port_s) {
        auto p = std::strtoul(port_s, nullptr, 10);
        require(p > 0 && p < 65536, ErrorCode::kInvalidArgument, "CXR_SERVER_PORT out of range");
        port = static_cast<std::uint16_t>(p);
    }
}

ServerCore::ServerCore(ServerConfig cfg)
    : cfg_(std::move(cfg)), store_(cfg_.storage_root / "dataset"), registry_(cfg_.storage_root / "registry", cfg_.compression) {
    cfg_.policy.validate();
    auto hdir = cfg_.storage_root / "holdout";
    if (fs::exists(hdir / "labels.tsv")) {
        std::istringstream in(read_text_file(hdir / "labels.tsv"));
        std::string name, label;
        while (in >> name >> label) {
            auto l = label_from_name(label);
            require(l.has_value(), ErrorCode::kFormat, "bad holdout label '" + label + "'");
            holdout_.add(read_pgm(hdir / name), *l);
        }
    }
}

ServerCore::~ServerCore() {
    std::lock_guard lock(bg_mu_);
    if (bg_.joinable()) bg_.join();
}

RegistryEntry ServerCore::publish(ModelArtifact artifact) { return registry_.publish(std::move(artifact)); }

void ServerCore::set_holdout(const ImageSet& set) {
    auto hdir = cfg_.storage_root / "holdout";
    fs::create_directories(hdir);
    std::ostringstream labels;
    for (std::size_t i = 0; i < set.size(); ++i) {
        auto name = "h" + std::to_string(i) + ".pgm";
        write_pgm(hdir / name, set.images[i]);
        labels << name << "\t" << label_name(set.labels[i]) << "\n";
    }
    write_text_atomic(hdir / "labels.tsv", labels.str());
    std::lock_guard lock(holdout_mu_);
    holdout_ = set;
}

bool ServerCore::has_holdout() const {
    std::lock_guard lock(holdout_mu_);
    return holdout_.size() > 0;
}

double ServerCore::policy_score(const ModelArtifact& model) const {
    std::lock_guard lock(holdout_mu_);
    require(holdout_.size() > 0, ErrorCode::kUnavailable, "no held-out set configured");
    auto ev = evaluate(model, holdout_);
    if (cfg_.policy.metric == PolicyMetric::kAccuracy) return ev.report.accuracy;
    return f_beta(ev.report.pneumonia().precision, ev.report.pneumonia().recall, cfg_.policy.beta);
}

std::vector<Frame> ServerCore::handle_bytes(std::span<const std::uint8_t> wire) {
    Frame f;
    try {
        f = decode_frame(wire);
    } catch (const Error& e) {
        return {error_frame(reason_of(e), e.what())};
    }
    return handle(f);
}

std::vector<Frame> ServerCore::handle(const Frame& request) {
    try {
        switch (request.type) {
        case MsgType::kPredictReq: return predict(parse_predict_req(request), false);
        case MsgType::kFlushBatch: return predict(parse_flush_batch(request).request, true);
        case MsgType::kConfirmReq: {
            auto c = parse_confirm_req(request);
            if (!store_.contains(c.scan_id)) return {error_frame(Reason::kNotFound, "unknown scan id " + c.scan_id)};
            store_.set_label(c.scan_id, c.diagnosis(), true);
            if (cfg_.auto_retrain && store_.update_batch_size() >= cfg_.policy.threshold) maybe_retrain_async();
            return {make_ack()};
        }
        case MsgType::kUpdateCheck: {
            auto d = parse_update_check(request);
            auto active = registry_.active();
            if (!active) return {error_frame(Reason::kUnavailable, "no model published")};
            if (d == active->entry.compressed_digest) return {make_update_none()};
            return {make_frame(UpdateAvail{active->entry.compressed_digest, active->entry.compressed_size,
                                           static_cast<std::uint32_t>(active->entry.version)})};
        }
        case MsgType::kModelChunk: return stream_model(parse_model_chunk(request));
        case MsgType::kAck: parse_ack(request); return {};
        default:
            return {error_frame(Reason::kBadType,
                                "server does not accept " + std::string(msg_type_name(request.type)))};
        }
    } catch (const Error& e) {
        return {error_frame(reason_of(e), e.what())};
    }
}

std::vector<Frame> ServerCore::predict(const PredictReq& req, bool from_flush) {
    auto active = registry_.active();
    if (!active) return {error_frame(Reason::kUnavailable, "no model published")};

    std::uint8_t flags = 0;
    auto it = req.metadata.find("model");
    if (it != req.metadata.end() && it->second != to_hex(active->entry.compressed_digest))
        flags |= kFlagUpdateAvailable;

    {
        std::lock_guard lock(responses_mu_);
        auto r = responses_.find(req.scan_id);
        // A flushed scan asks for a fresh score, so only live retries are
        // answered from the cache.
        if (r != responses_.end() && !from_flush) {
            PredictResp dup = r->second;
            dup.flags = static_cast<std::uint8_t>(flags | kFlagDuplicate);
            return {make_frame(dup)};
        }
    }

    auto out = forward(active->model, normalize(req.image).reshaped({1, 128, 128, 1}));
    PredictResp resp;
    resp.scan_id = req.scan_id;
    resp.probability = static_cast<float>(out[1]);
    resp.verdict = verdict_for(out[1]);
    resp.model_version = static_cast<std::uint32_t>(active->entry.version);
    resp.recall = static_cast<float>(active->model.metrics().recall);
    resp.precision = static_cast<float>(active->model.metrics().precision);

    ScanRecord rec;
    rec.id = req.scan_id;
    rec.image = req.image;
    rec.section = cfg_.default_section;
    rec.diversity = diversity_from(req.metadata);
    if (store_.ingest(rec) == ScanStore::IngestResult::kDuplicate) flags |= kFlagDuplicate;
    ++served_;

    {
        std::lock_guard lock(responses_mu_);
        responses_.emplace(req.scan_id, resp);
    }
    resp.flags = flags;
    return {make_frame(resp)};
}

std::vector<Frame> ServerCore::stream_model(const ModelChunk& req) {
    Bytes bytes;
    auto active = registry_.active();
    if (active && active->entry.compressed_digest == req.digest) {
        bytes = active->compressed;
    } else {
        // A client may still be resuming a version that has since been
        // superseded; serve it while the object exists.
        auto path = registry_.root() / "objects" / (to_hex(req.digest) + ".cxrc");
        if (!fs::exists(path)) return {error_frame(Reason::kNotFound, "unknown model digest")};
        bytes = read_file(path);
    }
    if (req.offset > bytes.size()) return {error_frame(Reason::kBadPayload, "offset beyond model size")};
    std::vector<Frame> out;
    for (std::uint64_t off = req.offset; off < bytes.size(); off += kChunkSize) {
        ModelChunk c;
        c.digest = req.digest;
        c.offset = off;
        c.total = bytes.size();
        auto end = std::min<std::uint64_t>(off + kChunkSize, bytes.size());
        c.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(off), bytes.begin() + static_cast<std::ptrdiff_t>(end));
        out.push_back(make_frame(c));
    }
    return out;
}

void ServerCore::maybe_retrain_async() {
    std::lock_guard lock(bg_mu_);
    if (bg_running_.exchange(true)) return;
    if (bg_.joinable()) bg_.join();
    bg_ = std::thread([this] {
        try {
            retrain_and_maybe_replace();
        } catch (...) {
            // Reported through the next explicit retrain; the server keeps serving.
        }
        bg_running_ = false;
    });
}

RetrainReport ServerCore::retrain_and_maybe_replace(bool force) {
    std::lock_guard job(job_mu_);
    RetrainReport rep;
    auto active = registry_.active();
    require(active != nullptr, ErrorCode::kUnavailable, "no active model to retrain");
    rep.version_before = rep.version_after = active->entry.version;

    auto update_ids = store_.update_batch_ids();
    rep.update_records = update_ids.size();
    if (update_ids.empty() || (!force && update_ids.size() < cfg_.policy.threshold)) {
        rep.message = "update batch below threshold (" + std::to_string(update_ids.size()) + "/" +
                      std::to_string(cfg_.policy.threshold) + ")";
        return rep;
    }
    require(has_holdout(), ErrorCode::kUnavailable, "no held-out set configured");
    rep.ran = true;

    auto records = store_.training_records();
    rep.train_records = records.size();
    ImageSet train_set, val_set;
    std::size_t normals = 0;
    for (const auto& r : records) normals += r.label == Label::kNormal;
    if (normals >= 2 && records.size() - normals >= 2) {
        auto [tr, va] = split(records, SplitSpec{cfg_.val_fraction, Rng::mix(cfg_.seed, rep.version_before)});
        train_set = to_image_set(tr);
        val_set = to_image_set(va);
    } else {
        train_set = records_to_set(records);
        std::lock_guard lock(holdout_mu_);
        val_set = holdout_;
    }

    TrainConfig tc = cfg_.train;
    tc.seed = Rng::mix(cfg_.seed, rep.version_before + 1000);
    auto result = transfer_retrain(active->model, train_set, val_set, tc);
    rep.epochs = result.history.size();
    if (result.diverged) {
        rep.diverged = true;
        rep.message = "candidate diverged; active model retained: " + result.message;
        return rep;
    }

    rep.active_score = policy_score(active->model);
    rep.candidate_score = policy_score(result.model);
    if (rep.candidate_score > rep.active_score) {
        auto e = registry_.publish(result.model);
        rep.replaced = true;
        rep.version_after = e.version;
        rep.message = "candidate replaced the active model";
    } else {
        rep.message = "candidate did not beat the active model";
    }
    store_.mark_used(update_ids);
    return rep;
}

std::vector<ExportEntry> ServerCore::export_public(const fs::path& out_dir) const {
    return store_.export_public(out_dir);
}

}  // namespace cxr
