// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "cxr/compress.hpp"
#include "cxr/dataset.hpp"
#include "cxr/protocol.hpp"
#include "cxr/registry.hpp"
#include "cxr/scan_store.hpp"
#include "cxr/train.hpp"

namespace cxr {

enum class PolicyMetric { kFBeta, kAccuracy };

struct RetrainPolicy {
    std::size_t threshold = 50;  // confirmed update-batch records
    PolicyMetric metric = PolicyMetric::kFBeta;
    double beta = 2.0;

    void validate() const;
};

struct ServerConfig {
    std::filesystem::path storage_root = "cxr-server";
    std::uint16_t port = 7461;
    Section default_section = Section::kPrivate;
    RetrainPolicy policy;
    TrainConfig train;
    CompressionConfig compression;
    double val_fraction = 0.2;
    bool auto_retrain = false;
    std::uint64_t seed = 0;

    // CXR_STORAGE_ROOT and CXR_SERVER_PORT override the fields when set.
    void apply_env();
};

struct RetrainReport {
    bool ran = false;
    bool replaced = false;
    bool diverged = false;
    std::uint64_t version_before = 0;
    std::uint64_t version_after = 0;
    double active_score = 0.0;
    double candidate_score = 0.0;
    std::size_t update_records = 0;
    std::size_t train_records = 0;
    std::size_t epochs = 0;
    std::string message;
};

// Protocol endpoint plus the dataset/registry/retrain machinery behind it.
// handle() is safe to call from many threads; each request is served by a
// single model snapshot.
class ServerCore {
public:
    explicit ServerCore(ServerConfig cfg);
    ~ServerCore();

    ServerCore(const ServerCore&) = delete;
    ServerCore& operator=(const ServerCore&) = delete;

    std::vector<Frame> handle(const Frame& request);
    // Decodes first; codec failures come back as an Error frame.
    std::vector<Frame> handle_bytes(std::span<const std::uint8_t> wire);

    RegistryEntry publish(ModelArtifact artifact);

    // Frozen yardstick for replacement decisions, persisted under
    // <root>/holdout and never ingested.
    void set_holdout(const ImageSet& set);
    bool has_holdout() const;

    // Serialized by a job lock. Without `force` nothing happens below the
    // policy threshold.
    RetrainReport retrain_and_maybe_replace(bool force = false);
    // Score of a model on the holdout under the policy metric.
    double policy_score(const ModelArtifact& model) const;

    std::vector<ExportEntry> export_public(const std::filesystem::path& out_dir) const;

    ScanStore& store() { return store_; }
    const ScanStore& store() const { return store_; }
    ModelRegistry& registry() { return registry_; }
    const ServerConfig& config() const { return cfg_; }

    std::size_t predictions_served() const { return served_.load(); }

private:
    std::vector<Frame> predict(const PredictReq& req, bool from_flush);
    std::vector<Frame> stream_model(const ModelChunk& req);
    void maybe_retrain_async();

    ServerConfig cfg_;
    ScanStore store_;
    ModelRegistry registry_;
    ImageSet holdout_;
    mutable std::mutex holdout_mu_;
    std::mutex job_mu_;
    std::mutex responses_mu_;
    std::map<std::string, PredictResp> responses_;
    std::atomic<std::size_t> served_{0};
    std::mutex bg_mu_;
    std::thread bg_;
    std::atomic<bool> bg_running_{false};
};

}  // namespace cxr
