// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cxr/compress.hpp"
#include "cxr/imaging.hpp"
#include "cxr/ledger.hpp"
#include "cxr/netsim.hpp"
#include "cxr/protocol.hpp"
#include "cxr/transport.hpp"

namespace cxr {

struct ClientConfig {
    std::filesystem::path storage = "cxr-client";
    std::string client_id = "edge";
    std::string server_host = "127.0.0.1";
    std::uint16_t server_port = 7461;
    std::string http_bind = "127.0.0.1";
    std::uint16_t http_port = 8460;
    std::filesystem::path static_dir;  // optional web UI files
    PreprocessConfig preprocess;
    double request_timeout_s = 10.0;
    double sync_interval_s = 6 * 3600.0;
    Metadata metadata;  // sent with every scan (deployment, token, ...)
    LinkProfile link;   // used by simulations only

    // key=value lines; '#' comments. metadata.<key>=... fills `metadata`.
    static ClientConfig parse(const std::string& text);
    static ClientConfig load(const std::filesystem::path& path);
};

struct CacheItem {
    enum class Kind : std::uint8_t { kScan = 0, kConfirm = 1 };

    Kind kind = Kind::kScan;
    std::string id;
    double enqueued_at = 0.0;
    // scans
    GrayImage image;
    Metadata metadata;
    float local_probability = 0.0f;
    Label local_verdict = Label::kNormal;
    std::uint32_t local_version = 0;
    // confirmations
    Label verdict = Label::kNormal;
    bool confirmed = false;

    bool operator==(const CacheItem&) const = default;
};

// Disk-backed FIFO of work waiting for the server. Each item is its own file;
// queue.log records pushes and pops and is compacted when the queue drains.
class PictureCache {
public:
    explicit PictureCache(std::filesystem::path dir);

    // False (and nothing stored) if an identical item is already pending.
    bool push(const CacheItem& item);
    std::optional<CacheItem> front() const;
    void pop();
    std::size_t size() const;
    std::vector<CacheItem> items() const;
    bool has_pending(const std::string& id) const;

private:
    void compact();

    std::filesystem::path dir_;
    mutable std::mutex mu_;
    std::vector<std::pair<std::uint64_t, CacheItem>> queue_;
    std::uint64_t next_seq_ = 1;
    std::size_t log_lines_ = 0;
};

enum class ScanSource { kServer, kLocal };
std::string_view scan_source_name(ScanSource s);

struct ScanResult {
    std::string id;
    double probability = 0.0;
    Label verdict = Label::kNormal;
    ScanSource source = ScanSource::kServer;
    std::uint32_t model_version = 0;
    double recall = 0.0;
    double precision = 0.0;
};

// What the client knows about a scan it evaluated.
struct EvaluatedScan {
    ScanResult result;
    std::optional<bool> confirmed;
    bool delivered = false;  // the server has the image
    // Server score of a locally answered scan, once flushed.
    std::optional<double> server_probability;
    std::optional<Label> server_verdict;
    bool disagreement = false;
};

// Where install/download can be interrupted in tests.
enum class KillPoint {
    kNone,
    kAfterUpdateCheck,
    kMidDownload,       // after `kill_after_chunks` chunks were persisted
    kDownloadComplete,  // all bytes on disk, nothing staged
    kStaged,            // staged file written, not yet renamed
    kInstalled,         // renamed, before cleanup and in-memory swap
};

struct SimulatedCrash : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ClientStatus {
    bool online = false;
    std::size_t cache_depth = 0;
    bool has_model = false;
    std::uint32_t model_version = 0;
    Digest model_digest{};  // compressed digest
    double model_recall = 0.0;
    double model_precision = 0.0;
    std::uint64_t download_offset = 0;
    std::uint64_t download_total = 0;
    LedgerTotals ledger;
};

enum class SyncStep { kMore, kIdle, kFailed };

struct SyncReport {
    std::size_t scans_flushed = 0;
    std::size_t confirmations_flushed = 0;
    std::size_t rejected = 0;
    bool checked = false;
    bool update_available = false;
    std::uint64_t model_bytes = 0;
    bool installed = false;
    std::uint32_t installed_version = 0;
    bool completed = false;
    std::string error;
};

using TransportFactory = std::function<std::unique_ptr<Transport>(BandwidthLedger*)>;
using EventSink = std::function<void(const std::string&)>;

// Edge node logic. The interactive lane (handle_scan, record_confirmation)
// and the background lane (sync) each own a transport and may run on
// different threads.
class Client {
public:
    Client(ClientConfig cfg, const TransportFactory& transports);

    // Installs a compressed model without the network (first provisioning).
    void provision(std::span<const std::uint8_t> compressed);

    ScanResult handle_scan(const GrayImage& raw, const Metadata& metadata = {},
                           std::optional<std::string> id = std::nullopt);
    // Returns false when that exact state was already recorded.
    bool record_confirmation(const std::string& id, bool confirmed);

    SyncReport sync_cycle();
    // One unit of background work; begin_sync() rewinds to the flush phase.
    void begin_sync();
    SyncStep sync_step();
    const SyncReport& last_sync() const { return report_; }

    ClientStatus status() const;
    std::optional<EvaluatedScan> evaluated(const std::string& id) const;
    std::vector<EvaluatedScan> evaluated_scans() const;
    std::optional<GrayImage> scan_image(const std::string& id) const;
    // Decompressed local model (shared, immutable).
    std::shared_ptr<const ModelArtifact> local_model() const;

    bool online() const { return online_; }
    // Set when a server response said a newer model exists, or on reconnect.
    bool wants_sync() const { return wants_sync_; }

    PictureCache& cache() { return cache_; }
    BandwidthLedger& ledger() { return ledger_; }
    Transport& background_transport() { return *bg_; }
    const ClientConfig& config() const { return cfg_; }

    void set_event_sink(EventSink sink) { sink_ = std::move(sink); }
    void set_kill_point(KillPoint k, std::size_t after_chunks = 1);
    // Clock used for cache timestamps (the simulator supplies its own).
    void set_clock(std::function<double()> clock) { clock_ = std::move(clock); }

private:
    struct Slot {
        std::shared_ptr<const ModelArtifact> model;
        Digest digest{};
        std::uint32_t version = 0;
    };
    enum class Phase { kFlush, kCheck, kDownload, kDone };

    void load_state();
    void load_model();
    void install(std::span<const std::uint8_t> compressed);
    void append_log(const std::string& line);
    std::string next_id();
    void emit(const std::string& e);
    void kill(KillPoint k);
    void set_online(bool up);
    SyncStep flush_one();
    SyncStep check_update();
    SyncStep take_chunk(const Exchange& ex);
    SyncStep finish_download();
    SyncStep fail_sync(const std::string& why);
    std::filesystem::path partial_path(const Digest& d) const;

    ClientConfig cfg_;
    BandwidthLedger ledger_;
    std::unique_ptr<Transport> interactive_;
    std::unique_ptr<Transport> bg_;
    PictureCache cache_;

    mutable std::mutex slot_mu_;
    Slot slot_;

    mutable std::mutex eval_mu_;
    std::map<std::string, EvaluatedScan> evaluated_;
    std::vector<std::string> eval_order_;
    std::uint64_t id_counter_ = 0;

    std::atomic<bool> online_{false};
    std::atomic<bool> wants_sync_{false};

    std::mutex sync_mu_;
    Phase phase_ = Phase::kDone;
    SyncReport report_;
    UpdateAvail target_{};
    std::uint64_t download_offset_ = 0;

    KillPoint kill_ = KillPoint::kNone;
    std::size_t kill_after_chunks_ = 1;
    std::size_t chunks_this_download_ = 0;
    EventSink sink_;
    std::function<double()> clock_;
};

}  // namespace cxr
