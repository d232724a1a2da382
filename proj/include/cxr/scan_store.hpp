// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cxr/dataset.hpp"

namespace cxr {

struct ExportEntry {
    std::string id;
    Label label = Label::kUnlabeled;
    Section section = Section::kPublic;
};

// Durable scan store.
//
// Layout under root/:
//   scans/<id>.pgm     raster
//   scans/<id>.meta    sidecar (key=value)
//   journal.log        append-only event log, one fsync'd line per event
//   index.tsv          snapshot of record state, rewritten atomically
//
// One writer at a time (internal mutex); readers get copies.
class ScanStore {
public:
    explicit ScanStore(std::filesystem::path root, std::uint32_t required_side = 128);

    enum class IngestResult { kStored, kDuplicate };

    // Idempotent by id. New records enter batch=update.
    IngestResult ingest(const ScanRecord& record);

    // Records a diagnosis for a stored scan. Returns false when the label and
    // confirmation state were already recorded.
    bool set_label(const std::string& id, Label label, bool confirmed);

    bool contains(const std::string& id) const;
    std::optional<ScanRecord> get(const std::string& id) const;  // with image
    std::size_t size() const;

    // Confirmed (labelled) records waiting in the update batch.
    std::size_t update_batch_size() const;
    // Stored but not yet confirmed.
    std::size_t pending_count() const;

    // Metadata of every record (images not loaded).
    std::vector<ScanRecord> list() const;

    // Confirmed records from both sections, used and update, with images.
    std::vector<ScanRecord> training_records() const;
    // Ids of the confirmed update-batch records, in ingest order.
    std::vector<std::string> update_batch_ids() const;

    // Moves the given update-batch records to batch=used.
    void mark_used(const std::vector<std::string>& ids);

    // Copies every section=public raster byte-for-byte into out_dir and writes
    // out_dir/manifest.tsv (id, label, section).
    std::vector<ExportEntry> export_public(const std::filesystem::path& out_dir) const;

    const std::filesystem::path& root() const { return root_; }

private:
    struct Entry {
        ScanRecord meta;  // image left empty
        std::uint64_t order = 0;
    };

    void load();
    void replay(const std::string& line);
    void commit(const std::string& event);
    void write_sidecar(const ScanRecord& r) const;
    void write_index() const;
    std::filesystem::path pgm_path(const std::string& id) const;
    std::filesystem::path meta_path(const std::string& id) const;

    std::filesystem::path root_;
    std::uint32_t side_;
    mutable std::mutex mu_;
    std::map<std::string, Entry> entries_;
    std::uint64_t seq_ = 0;
    std::uint64_t next_order_ = 0;
};

}  // namespace cxr
