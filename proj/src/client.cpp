// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/client.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "cxr/binary_io.hpp"
#include "cxr/error.hpp"

namespace cxr {

namespace fs = std::filesystem;

namespace {

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (...) {
    }
    fail(ErrorCode::kInvalidArgument, "config key '" + key + "' expects a number, got '" + v + "'");
}

std::uint16_t parse_port(const std::string& key, const std::string& v) {
    double d = parse_double(key, v);
    require(d >= 0 && d < 65536 && d == std::floor(d), ErrorCode::kInvalidArgument, "config key '" + key + "' is not a port");
    return static_cast<std::uint16_t>(d);
}

std::string trim(std::string s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

// Appends to a file and fsyncs; used for partial downloads.
void append_durable(const fs::path& path, std::span<const std::uint8_t> bytes) {
    int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    require(fd >= 0, ErrorCode::kIo, "cannot open " + path.string() + ": " + std::strerror(errno));
    std::size_t done = 0;
    while (done < bytes.size()) {
        auto w = ::write(fd, bytes.data() + done, bytes.size() - done);
        if (w < 0 && errno == EINTR) continue;
        if (w < 0) {
            ::close(fd);
            fail(ErrorCode::kIo, "write " + path.string() + ": " + std::strerror(errno));
        }
        done += static_cast<std::size_t>(w);
    }
    ::fsync(fd);
    ::close(fd);
}

Bytes encode_item(const CacheItem& it) {
    Bytes out;
    ByteWriter w(out);
    w.u8(static_cast<std::uint8_t>(it.kind));
    w.u8(static_cast<std::uint8_t>(it.id.size()));
    w.text(it.id);
    w.f64(it.enqueued_at);
    if (it.kind == CacheItem::Kind::kScan) {
        w.u32(it.image.width());
        w.u32(it.image.height());
        w.bytes(it.image.pixels());
        w.bytes(encode_metadata(it.metadata));
        w.f32(it.local_probability);
        w.u8(static_cast<std::uint8_t>(it.local_verdict));
        w.u32(it.local_version);
    } else {
        w.u8(static_cast<std::uint8_t>(it.verdict));
        w.u8(it.confirmed ? 1 : 0);
    }
    return out;
}

CacheItem decode_item(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    CacheItem it;
    auto kind = r.u8();
    require(kind <= 1, ErrorCode::kFormat, "bad cache item kind");
    it.kind = static_cast<CacheItem::Kind>(kind);
    it.id = r.text(r.u8());
    it.enqueued_at = r.f64();
    if (it.kind == CacheItem::Kind::kScan) {
        auto wd = r.u32();
        auto ht = r.u32();
        require(std::uint64_t{wd} * ht <= (1u << 24), ErrorCode::kFormat, "cache image too large");
        auto px = r.bytes(std::size_t{wd} * ht);
        it.image = GrayImage(wd, ht, std::vector<std::uint8_t>(px.begin(), px.end()));
        it.metadata = decode_metadata(r.bytes(kMetadataBytes));
        it.local_probability = r.f32();
        it.local_verdict = static_cast<Label>(r.u8());
        it.local_version = r.u32();
    } else {
        it.verdict = static_cast<Label>(r.u8());
        it.confirmed = r.u8() == 1;
    }
    return it;
}

std::string fmt_prob(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", p);
    return buf;
}

}  // namespace

// --- config -----------------------------------------------------------------

ClientConfig ClientConfig::parse(const std::string& text) {
    ClientConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        require(eq != std::string::npos, ErrorCode::kInvalidArgument,
                "config line " + std::to_string(lineno) + " has no '='");
        auto key = trim(line.substr(0, eq));
        auto val = trim(line.substr(eq + 1));
        if (key == "storage") c.storage = val;
        else if (key == "client_id") c.client_id = val;
        else if (key == "server_host") c.server_host = val;
        else if (key == "server_port") c.server_port = parse_port(key, val);
        else if (key == "http_bind") c.http_bind = val;
        else if (key == "http_port") c.http_port = parse_port(key, val);
        else if (key == "static_dir") c.static_dir = val;
        else if (key == "gamma") c.preprocess.gamma = parse_double(key, val);
        else if (key == "target_side") c.preprocess.target_side = static_cast<std::uint32_t>(parse_double(key, val));
        else if (key == "request_timeout") c.request_timeout_s = parse_double(key, val);
        else if (key == "sync_interval") c.sync_interval_s = parse_double(key, val);
        else if (key == "link_bandwidth_kbps") c.link.bandwidth_kbps = parse_double(key, val);
        else if (key == "link_latency_ms") c.link.latency_ms = parse_double(key, val);
        else if (key.rfind("metadata.", 0) == 0 && key.size() > 9) c.metadata[key.substr(9)] = val;
        else fail(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
    }
    require(valid_scan_id(c.client_id) && c.client_id.size() <= 40, ErrorCode::kInvalidArgument,
            "client_id must be 1-40 characters of [A-Za-z0-9._-]");
    c.preprocess.validate();
    require(c.request_timeout_s > 0, ErrorCode::kInvalidArgument, "request_timeout must be positive");
    require(c.sync_interval_s > 0, ErrorCode::kInvalidArgument, "sync_interval must be positive");
    c.link.validate();
    return c;
}

ClientConfig ClientConfig::load(const fs::path& path) { return parse(read_text_file(path)); }

// --- cache ------------------------------------------------------------------

PictureCache::PictureCache(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    auto log = dir_ / "queue.log";
    if (!fs::exists(log)) return;
    std::istringstream in(read_text_file(log));
    std::vector<std::uint64_t> live;
    std::string line;
    while (std::getline(in, line)) {
        if (line.size() < 2) continue;
        ++log_lines_;
        auto seq = std::stoull(line.substr(1));
        next_seq_ = std::max<std::uint64_t>(next_seq_, seq + 1);
        if (line[0] == '+') live.push_back(seq);
        else if (line[0] == '-') live.erase(std::remove(live.begin(), live.end(), seq), live.end());
    }
    for (auto seq : live) {
        auto path = dir_ / (std::to_string(seq) + ".item");
        // A push is logged only after its file is durable, so a missing file
        // means a torn write of the item itself; skip it.
        if (!fs::exists(path)) continue;
        queue_.emplace_back(seq, decode_item(read_file(path)));
    }
}

bool PictureCache::push(const CacheItem& item) {
    std::lock_guard lock(mu_);
    for (const auto& [seq, it] : queue_)
        if (it == item) return false;
    auto seq = next_seq_++;
    write_file_atomic(dir_ / (std::to_string(seq) + ".item"), encode_item(item));
    append_line_durable(dir_ / "queue.log", "+" + std::to_string(seq));
    ++log_lines_;
    queue_.emplace_back(seq, item);
    return true;
}

std::optional<CacheItem> PictureCache::front() const {
    std::lock_guard lock(mu_);
    if (queue_.empty()) return std::nullopt;
    return queue_.front().second;
}

void PictureCache::pop() {
    std::lock_guard lock(mu_);
    if (queue_.empty()) return;
    auto seq = queue_.front().first;
    append_line_durable(dir_ / "queue.log", "-" + std::to_string(seq));
    ++log_lines_;
    queue_.erase(queue_.begin());
    std::error_code ec;
    fs::remove(dir_ / (std::to_string(seq) + ".item"), ec);
    if (queue_.empty() || log_lines_ > 4 * queue_.size() + 64) compact();
}

void PictureCache::compact() {
    std::string text;
    for (const auto& [seq, it] : queue_) text += "+" + std::to_string(seq) + "\n";
    write_text_atomic(dir_ / "queue.log", text);
    log_lines_ = queue_.size();
}

std::size_t PictureCache::size() const {
    std::lock_guard lock(mu_);
    return queue_.size();
}

std::vector<CacheItem> PictureCache::items() const {
    std::lock_guard lock(mu_);
    std::vector<CacheItem> out;
    for (const auto& [seq, it] : queue_) out.push_back(it);
    return out;
}

bool PictureCache::has_pending(const std::string& id) const {
    std::lock_guard lock(mu_);
    return std::any_of(queue_.begin(), queue_.end(), [&](const auto& e) { return e.second.id == id; });
}

// --- client -----------------------------------------------------------------

std::string_view scan_source_name(ScanSource s) { return s == ScanSource::kServer ? "server" : "local"; }

Client::Client(ClientConfig cfg, const TransportFactory& transports)
    : cfg_(std::move(cfg)), cache_(cfg_.storage / "cache") {
    fs::create_directories(cfg_.storage / "scans");
    fs::create_directories(cfg_.storage / "download");
    interactive_ = transports(&ledger_);
    bg_ = transports(&ledger_);
    clock_ = [] {
        return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
    };
    load_model();
    load_state();
}

void Client::emit(const std::string& e) {
    if (sink_) sink_(e);
}

void Client::kill(KillPoint k) {
    if (kill_ == k) {
        kill_ = KillPoint::kNone;
        throw SimulatedCrash("simulated crash");
    }
}

void Client::set_kill_point(KillPoint k, std::size_t after_chunks) {
    kill_ = k;
    kill_after_chunks_ = after_chunks;
}

void Client::set_online(bool up) {
    bool was = online_.exchange(up);
    if (up && !was) wants_sync_ = true;
}

void Client::load_model() {
    auto active = cfg_.storage / "model.cxrc";
    auto staged = cfg_.storage / "model.staged";
    std::error_code ec;
    if (fs::exists(active)) {
        try {
            auto bytes = read_file(active);
            auto dm = decompress_model(bytes);
            Slot s;
            s.digest = dm.compressed_digest;
            s.version = static_cast<std::uint32_t>(dm.model.version());
            s.model = std::make_shared<const ModelArtifact>(std::move(dm.model));
            std::lock_guard lock(slot_mu_);
            slot_ = std::move(s);
        } catch (const Error&) {
            // The rename is atomic, so this is outside tampering or disk
            // damage; fall through to a staged copy if one survived.
            fs::remove(active, ec);
        }
    }
    if (fs::exists(staged)) {
        bool have = slot_.model != nullptr;
        if (!have) {
            try {
                decompress_model(read_file(staged));
                fs::rename(staged, active);
                load_model();
                return;
            } catch (const Error&) {
            }
        }
        fs::remove(staged, ec);
    }
}

void Client::load_state() {
    auto log = cfg_.storage / "scans.log";
    if (!fs::exists(log)) return;
    std::istringstream in(read_text_file(log));
    std::string line;
    std::lock_guard lock(eval_mu_);
    while (std::getline(in, line)) {
        std::istringstream f(line);
        std::string op, id;
        f >> op;
        if (op == "id") {
            f >> id_counter_;
            continue;
        }
        f >> id;
        if (op == "eval") {
            EvaluatedScan e;
            std::string verdict, source;
            f >> e.result.probability >> verdict >> source >> e.result.model_version >> e.result.recall >>
                e.result.precision;
            e.result.id = id;
            e.result.verdict = label_from_name(verdict).value_or(Label::kNormal);
            e.result.source = source == "local" ? ScanSource::kLocal : ScanSource::kServer;
            e.delivered = e.result.source == ScanSource::kServer;
            if (!evaluated_.count(id)) eval_order_.push_back(id);
            evaluated_[id] = e;
        } else if (op == "confirm") {
            int c = 0;
            f >> c;
            if (evaluated_.count(id)) evaluated_[id].confirmed = c == 1;
        } else if (op == "rescore") {
            double p;
            std::string verdict;
            f >> p >> verdict;
            if (auto it = evaluated_.find(id); it != evaluated_.end()) {
                it->second.delivered = true;
                it->second.server_probability = p;
                it->second.server_verdict = label_from_name(verdict);
                it->second.disagreement = it->second.server_verdict != it->second.result.verdict;
            }
        }
    }
}

void Client::append_log(const std::string& line) { append_line_durable(cfg_.storage / "scans.log", line); }

std::string Client::next_id() {
    std::lock_guard lock(eval_mu_);
    ++id_counter_;
    // Persist before use: a reused id would be deduplicated away server-side.
    append_log("id " + std::to_string(id_counter_));
    return cfg_.client_id + "-" + std::to_string(id_counter_);
}

void Client::provision(std::span<const std::uint8_t> compressed) { install(compressed); }

void Client::install(std::span<const std::uint8_t> compressed) {
    auto dm = decompress_model(compressed);
    kill(KillPoint::kDownloadComplete);
    auto staged = cfg_.storage / "model.staged";
    write_file_atomic(staged, compressed);
    kill(KillPoint::kStaged);
    fs::rename(staged, cfg_.storage / "model.cxrc");
    kill(KillPoint::kInstalled);
    Slot s;
    s.digest = dm.compressed_digest;
    s.version = static_cast<std::uint32_t>(dm.model.version());
    s.model = std::make_shared<const ModelArtifact>(std::move(dm.model));
    std::lock_guard lock(slot_mu_);
    slot_ = std::move(s);
}

std::shared_ptr<const ModelArtifact> Client::local_model() const {
    std::lock_guard lock(slot_mu_);
    return slot_.model;
}

ScanResult Client::handle_scan(const GrayImage& raw, const Metadata& metadata, std::optional<std::string> id) {
    require(!raw.empty(), ErrorCode::kInvalidArgument, "empty image");
    auto pre = preprocess(raw, cfg_.preprocess);
    std::string sid = id ? *id : next_id();
    require(valid_scan_id(sid), ErrorCode::kInvalidArgument, "invalid scan id '" + sid + "'");
    {
        std::lock_guard lock(eval_mu_);
        require(!evaluated_.count(sid), ErrorCode::kInvalidArgument, "scan id '" + sid + "' already used");
    }

    Metadata md = cfg_.metadata;
    for (const auto& [k, v] : metadata) md[k] = v;
    Slot slot;
    {
        std::lock_guard lock(slot_mu_);
        slot = slot_;
    }
    if (slot.model) md["model"] = to_hex(slot.digest);
    PredictReq req{sid, pre, md};
    auto frame = make_frame(req);  // validates metadata size before anything is stored
    write_pgm(cfg_.storage / "scans" / (sid + ".pgm"), pre);

    ScanResult r;
    r.id = sid;
    auto ex = interactive_->request(frame, cfg_.request_timeout_s);
    if (ex.ok() && ex.frame.type == MsgType::kPredictResp) {
        auto resp = parse_predict_resp(ex.frame);
        set_online(true);
        if (resp.flags & kFlagUpdateAvailable) wants_sync_ = true;
        r.probability = resp.probability;
        r.verdict = resp.verdict;
        r.source = ScanSource::kServer;
        r.model_version = resp.model_version;
        r.recall = resp.recall;
        r.precision = resp.precision;
        emit("predict id=" + sid + " source=server p=" + fmt_prob(r.probability) +
             " verdict=" + std::string(label_name(r.verdict)) + " version=" + std::to_string(r.model_version));
    } else {
        if (!ex.ok()) {
            interactive_->reset();
            set_online(false);
            emit("predict_failed id=" + sid + " reason=" + (ex.status == ExchangeStatus::kTimeout ? "timeout" : "disconnected"));
        } else {
            emit("predict_rejected id=" + sid);
        }
        require(slot.model != nullptr, ErrorCode::kUnavailable, "server unreachable and no local model installed");
        auto out = forward(*slot.model, normalize(pre).reshaped({1, std::size_t{pre.height()}, std::size_t{pre.width()}, 1}));
        r.probability = out[1];
        r.verdict = verdict_for(out[1]);
        r.source = ScanSource::kLocal;
        r.model_version = slot.version;
        r.recall = slot.model->metrics().recall;
        r.precision = slot.model->metrics().precision;

        CacheItem item;
        item.kind = CacheItem::Kind::kScan;
        item.id = sid;
        item.enqueued_at = clock_();
        item.image = pre;
        item.metadata = md;
        item.metadata.erase("model");
        item.local_probability = static_cast<float>(r.probability);
        item.local_verdict = r.verdict;
        item.local_version = r.model_version;
        cache_.push(item);
        emit("local id=" + sid + " p=" + fmt_prob(r.probability) + " verdict=" + std::string(label_name(r.verdict)) +
             " version=" + std::to_string(r.model_version) + " cache=" + std::to_string(cache_.size()));
    }

    std::ostringstream line;
    line << "eval " << sid << " " << fmt_prob(r.probability) << " " << label_name(r.verdict) << " "
         << scan_source_name(r.source) << " " << r.model_version << " " << r.recall << " " << r.precision;
    std::lock_guard lock(eval_mu_);
    append_log(line.str());
    EvaluatedScan e;
    e.result = r;
    e.delivered = r.source == ScanSource::kServer;
    evaluated_[sid] = e;
    eval_order_.push_back(sid);
    return r;
}

bool Client::record_confirmation(const std::string& id, bool confirmed) {
    Label verdict;
    {
        std::lock_guard lock(eval_mu_);
        auto it = evaluated_.find(id);
        require(it != evaluated_.end(), ErrorCode::kNotFound, "unknown scan id '" + id + "'");
        if (it->second.confirmed == confirmed) return false;
        it->second.confirmed = confirmed;
        append_log("confirm " + id + " " + (confirmed ? "1" : "0"));
        verdict = it->second.result.verdict;
    }
    ConfirmReq c{id, verdict, confirmed};
    // Anything still queued for this scan goes first, so the confirmation
    // must queue behind it.
    if (!cache_.has_pending(id)) {
        auto ex = interactive_->request(make_frame(c), cfg_.request_timeout_s);
        if (ex.ok() && ex.frame.type == MsgType::kAck) {
            set_online(true);
            emit("confirm id=" + id + " confirmed=" + (confirmed ? "1" : "0") + " delivered=1");
            return true;
        }
        if (!ex.ok()) {
            interactive_->reset();
            set_online(false);
        }
    }
    CacheItem item;
    item.kind = CacheItem::Kind::kConfirm;
    item.id = id;
    item.enqueued_at = clock_();
    item.verdict = verdict;
    item.confirmed = confirmed;
    cache_.push(item);
    emit("confirm id=" + id + " confirmed=" + (confirmed ? "1" : "0") + " queued cache=" + std::to_string(cache_.size()));
    return true;
}

std::optional<EvaluatedScan> Client::evaluated(const std::string& id) const {
    std::lock_guard lock(eval_mu_);
    auto it = evaluated_.find(id);
    if (it == evaluated_.end()) return std::nullopt;
    return it->second;
}

std::vector<EvaluatedScan> Client::evaluated_scans() const {
    std::lock_guard lock(eval_mu_);
    std::vector<EvaluatedScan> out;
    for (const auto& id : eval_order_) out.push_back(evaluated_.at(id));
    return out;
}

std::optional<GrayImage> Client::scan_image(const std::string& id) const {
    if (!valid_scan_id(id)) return std::nullopt;
    auto p = cfg_.storage / "scans" / (id + ".pgm");
    if (!fs::exists(p)) return std::nullopt;
    return read_pgm(p);
}

ClientStatus Client::status() const {
    ClientStatus s;
    s.online = online_;
    s.cache_depth = cache_.size();
    {
        std::lock_guard lock(slot_mu_);
        s.has_model = slot_.model != nullptr;
        s.model_version = slot_.version;
        s.model_digest = slot_.digest;
        if (slot_.model) {
            s.model_recall = slot_.model->metrics().recall;
            s.model_precision = slot_.model->metrics().precision;
        }
    }
    s.download_offset = download_offset_;
    s.download_total = target_.size;
    s.ledger = ledger_.totals();
    return s;
}

fs::path Client::partial_path(const Digest& d) const { return cfg_.storage / "download" / (to_hex(d) + ".part"); }

// --- background lane --------------------------------------------------------

void Client::begin_sync() {
    std::lock_guard lock(sync_mu_);
    phase_ = Phase::kFlush;
    report_ = {};
    wants_sync_ = false;
    emit("sync_start cache=" + std::to_string(cache_.size()));
}

SyncReport Client::sync_cycle() {
    begin_sync();
    for (;;) {
        auto s = sync_step();
        if (s != SyncStep::kMore) break;
    }
    return report_;
}

SyncStep Client::fail_sync(const std::string& why) {
    bg_->reset();
    set_online(false);
    report_.error = why;
    phase_ = Phase::kDone;
    emit("sync_failed reason=" + why);
    return SyncStep::kFailed;
}

SyncStep Client::sync_step() {
    std::lock_guard lock(sync_mu_);
    switch (phase_) {
    case Phase::kFlush: return flush_one();
    case Phase::kCheck: return check_update();
    case Phase::kDownload: {
        auto ex = bg_->next(cfg_.request_timeout_s);
        return take_chunk(ex);
    }
    case Phase::kDone: return SyncStep::kIdle;
    }
    return SyncStep::kIdle;
}

SyncStep Client::flush_one() {
    auto item = cache_.front();
    if (!item) {
        phase_ = Phase::kCheck;
        return SyncStep::kMore;
    }
    Frame frame;
    if (item->kind == CacheItem::Kind::kScan) {
        FlushBatch fb;
        fb.request = PredictReq{item->id, item->image, item->metadata};
        fb.local_probability = item->local_probability;
        fb.local_verdict = item->local_verdict;
        fb.local_version = item->local_version;
        frame = make_frame(fb);
    } else {
        frame = make_frame(ConfirmReq{item->id, item->verdict, item->confirmed});
    }
    auto ex = bg_->request(frame, cfg_.request_timeout_s);
    if (!ex.ok()) return fail_sync(ex.status == ExchangeStatus::kTimeout ? "timeout" : "disconnected");
    set_online(true);

    if (item->kind == CacheItem::Kind::kScan && ex.frame.type == MsgType::kPredictResp) {
        auto resp = parse_predict_resp(ex.frame);
        if (resp.flags & kFlagUpdateAvailable) wants_sync_ = true;
        bool agree = resp.verdict == item->local_verdict;
        {
            std::lock_guard lock(eval_mu_);
            append_log("rescore " + item->id + " " + fmt_prob(resp.probability) + " " +
                       std::string(label_name(resp.verdict)));
            if (auto it = evaluated_.find(item->id); it != evaluated_.end()) {
                it->second.delivered = true;
                it->second.server_probability = resp.probability;
                it->second.server_verdict = resp.verdict;
                it->second.disagreement = !agree;
            }
        }
        ++report_.scans_flushed;
        emit("flush id=" + item->id + " kind=scan server_p=" + fmt_prob(resp.probability) +
             " agree=" + (agree ? "1" : "0"));
    } else if (item->kind == CacheItem::Kind::kConfirm && ex.frame.type == MsgType::kAck) {
        ++report_.confirmations_flushed;
        emit("flush id=" + item->id + " kind=confirm");
    } else {
        // The server refused the item for good; retrying would wedge the queue.
        std::string why = ex.frame.type == MsgType::kError ? parse_error(ex.frame).text : "unexpected response";
        ++report_.rejected;
        emit("flush_rejected id=" + item->id + " reason=" + std::string(msg_type_name(ex.frame.type)));
        (void)why;
    }
    cache_.pop();
    return SyncStep::kMore;
}

SyncStep Client::check_update() {
    Digest current{};
    {
        std::lock_guard lock(slot_mu_);
        current = slot_.digest;
    }
    auto ex = bg_->request(make_update_check(current), cfg_.request_timeout_s);
    if (!ex.ok()) return fail_sync(ex.status == ExchangeStatus::kTimeout ? "timeout" : "disconnected");
    set_online(true);
    report_.checked = true;
    if (ex.frame.type == MsgType::kUpdateNone) {
        emit("update_none");
        report_.completed = true;
        wants_sync_ = false;
        phase_ = Phase::kDone;
        // Leftovers from a download that was installed before a crash.
        std::error_code ec;
        for (const auto& e : fs::directory_iterator(cfg_.storage / "download", ec)) fs::remove(e.path(), ec);
        return SyncStep::kIdle;
    }
    if (ex.frame.type != MsgType::kUpdateAvail) {
        phase_ = Phase::kDone;
        report_.error = "update check refused";
        emit("update_refused");
        return SyncStep::kFailed;
    }
    target_ = parse_update_avail(ex.frame);
    report_.update_available = true;
    kill(KillPoint::kAfterUpdateCheck);

    // Only one partial download is kept; a different digest supersedes it.
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(cfg_.storage / "download", ec))
        if (e.path() != partial_path(target_.digest)) fs::remove(e.path(), ec);
    auto part = partial_path(target_.digest);
    download_offset_ = fs::exists(part) ? fs::file_size(part) : 0;
    if (download_offset_ > target_.size) {
        fs::remove(part, ec);
        download_offset_ = 0;
    }
    chunks_this_download_ = 0;
    emit("update_avail version=" + std::to_string(target_.version) + " size=" + std::to_string(target_.size) +
         " digest=" + to_hex(target_.digest).substr(0, 12) + " resume=" + std::to_string(download_offset_));
    if (download_offset_ == target_.size) return finish_download();

    phase_ = Phase::kDownload;
    auto first = bg_->request(make_frame(ModelChunk{target_.digest, download_offset_, 0, {}}), cfg_.request_timeout_s);
    return take_chunk(first);
}

SyncStep Client::take_chunk(const Exchange& ex) {
    if (!ex.ok()) return fail_sync(ex.status == ExchangeStatus::kTimeout ? "timeout" : "disconnected");
    if (ex.frame.type != MsgType::kModelChunk) return fail_sync("unexpected " + std::string(msg_type_name(ex.frame.type)));
    auto c = parse_model_chunk(ex.frame);
    if (c.digest != target_.digest || c.offset != download_offset_ || c.total != target_.size)
        return fail_sync("chunk out of sequence");
    append_durable(partial_path(target_.digest), c.data);
    download_offset_ += c.data.size();
    report_.model_bytes += c.data.size();
    ++chunks_this_download_;
    bg_->send(make_ack(download_offset_));
    if (kill_ == KillPoint::kMidDownload && chunks_this_download_ >= kill_after_chunks_) kill(KillPoint::kMidDownload);
    if (download_offset_ < target_.size) return SyncStep::kMore;
    return finish_download();
}

SyncStep Client::finish_download() {
    phase_ = Phase::kDone;
    auto part = partial_path(target_.digest);
    auto bytes = read_file(part);
    std::error_code ec;
    if (bytes.size() != target_.size || compressed_digest_of(bytes) != target_.digest) {
        fs::remove(part, ec);
        return fail_sync("downloaded model does not match its digest");
    }
    try {
        install(bytes);
    } catch (const Error& e) {
        fs::remove(part, ec);
        report_.error = e.what();
        emit("install_failed");
        return SyncStep::kFailed;
    }
    fs::remove(part, ec);
    report_.installed = true;
    report_.installed_version = target_.version;
    report_.completed = true;
    wants_sync_ = false;
    emit("install version=" + std::to_string(target_.version) + " digest=" + to_hex(target_.digest).substr(0, 12));
    return SyncStep::kIdle;
}

}  // namespace cxr
