// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/scan_store.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cxr/binary_io.hpp"
#include "cxr/error.hpp"

namespace cxr {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    for (std::string tok; in >> tok;) out.push_back(tok);
    return out;
}

}  // namespace

ScanStore::ScanStore(fs::path root, std::uint32_t required_side) : root_(std::move(root)), side_(required_side) {
    fs::create_directories(root_ / "scans");
    load();
}

fs::path ScanStore::pgm_path(const std::string& id) const { return root_ / "scans" / (id + ".pgm"); }
fs::path ScanStore::meta_path(const std::string& id) const { return root_ / "scans" / (id + ".meta"); }

void ScanStore::load() {
    entries_.clear();
    seq_ = 0;
    std::uint64_t snapshot_seq = 0;
    if (fs::exists(root_ / "index.tsv")) {
        std::ifstream in(root_ / "index.tsv");
        std::string line;
        while (std::getline(in, line)) {
            if (line.rfind("seq=", 0) == 0) {
                snapshot_seq = std::stoull(line.substr(4));
                continue;
            }
            auto f = split_ws(line);
            if (f.size() < 6) continue;
            Entry e;
            e.order = std::stoull(f[0]);
            e.meta = decode_sidecar(read_text_file(meta_path(f[1])));
            next_order_ = std::max(next_order_, e.order + 1);
            entries_[e.meta.id] = std::move(e);
        }
        seq_ = snapshot_seq;
    }
    if (fs::exists(root_ / "journal.log")) {
        std::ifstream in(root_ / "journal.log");
        std::string line;
        while (std::getline(in, line)) {
            auto f = split_ws(line);
            if (f.empty()) continue;
            std::uint64_t s = std::stoull(f[0]);
            if (s <= snapshot_seq) continue;
            replay(line);
            seq_ = s;
        }
    }
}

void ScanStore::replay(const std::string& line) {
    auto f = split_ws(line);
    if (f.size() < 3) return;
    const std::string& op = f[1];
    const std::string& id = f[2];
    if (op == "put") {
        if (entries_.count(id) || !fs::exists(meta_path(id))) return;
        Entry e;
        e.meta = decode_sidecar(read_text_file(meta_path(id)));
        e.order = next_order_++;
        entries_[id] = std::move(e);
    } else if (op == "label" && f.size() >= 5) {
        auto it = entries_.find(id);
        if (it == entries_.end()) return;
        it->second.meta.label = label_from_name(f[3]).value_or(Label::kUnlabeled);
        it->second.meta.confirmed = f[4] == "1";
    } else if (op == "used") {
        auto it = entries_.find(id);
        if (it != entries_.end()) it->second.meta.batch = Batch::kUsed;
    }
}

void ScanStore::commit(const std::string& event) {
    ++seq_;
    append_line_durable(root_ / "journal.log", std::to_string(seq_) + " " + event);
    write_index();
}

void ScanStore::write_sidecar(const ScanRecord& r) const { write_text_atomic(meta_path(r.id), encode_sidecar(r)); }

void ScanStore::write_index() const {
    std::vector<const Entry*> ordered;
    for (const auto& [id, e] : entries_) ordered.push_back(&e);
    std::sort(ordered.begin(), ordered.end(), [](auto a, auto b) { return a->order < b->order; });
    std::ostringstream o;
    o << "seq=" << seq_ << "\n";
    for (const auto* e : ordered) {
        o << e->order << "\t" << e->meta.id << "\t" << label_name(e->meta.label) << "\t" << (e->meta.confirmed ? 1 : 0)
          << "\t" << section_name(e->meta.section) << "\t" << batch_name(e->meta.batch) << "\n";
    }
    write_text_atomic(root_ / "index.tsv", o.str());
}

ScanStore::IngestResult ScanStore::ingest(const ScanRecord& record) {
    require(valid_scan_id(record.id), ErrorCode::kInvalidArgument, "invalid scan id '" + record.id + "'");
    require(record.image.width() == side_ && record.image.height() == side_, ErrorCode::kInvalidArgument,
            "scan '" + record.id + "' must be " + std::to_string(side_) + "x" + std::to_string(side_) + ", got " +
                std::to_string(record.image.width()) + "x" + std::to_string(record.image.height()));
    std::lock_guard lock(mu_);
    if (entries_.count(record.id)) return IngestResult::kDuplicate;
    ScanRecord meta = record;
    meta.batch = Batch::kUpdate;
    meta.image = GrayImage();
    write_pgm(pgm_path(record.id), record.image);
    ScanRecord with_dims = meta;
    with_dims.image = record.image;
    write_sidecar(with_dims);
    Entry e;
    e.meta = std::move(meta);
    e.order = next_order_++;
    entries_[record.id] = std::move(e);
    commit("put " + record.id);
    return IngestResult::kStored;
}

bool ScanStore::set_label(const std::string& id, Label label, bool confirmed) {
    std::lock_guard lock(mu_);
    auto it = entries_.find(id);
    require(it != entries_.end(), ErrorCode::kNotFound, "unknown scan id '" + id + "'");
    auto& m = it->second.meta;
    if (m.label == label && m.confirmed == confirmed) return false;
    m.label = label;
    m.confirmed = confirmed;
    ScanRecord full = m;
    full.image = read_pgm(pgm_path(id));
    write_sidecar(full);
    commit("label " + id + " " + std::string(label_name(label)) + " " + (confirmed ? "1" : "0"));
    return true;
}

bool ScanStore::contains(const std::string& id) const {
    std::lock_guard lock(mu_);
    return entries_.count(id) != 0;
}

std::optional<ScanRecord> ScanStore::get(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    ScanRecord r = it->second.meta;
    r.image = read_pgm(pgm_path(id));
    return r;
}

std::size_t ScanStore::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

std::size_t ScanStore::update_batch_size() const {
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [](const auto& kv) {
        return kv.second.meta.confirmed && kv.second.meta.batch == Batch::kUpdate;
    }));
}

std::size_t ScanStore::pending_count() const {
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(),
                                                  [](const auto& kv) { return !kv.second.meta.confirmed; }));
}

std::vector<ScanRecord> ScanStore::list() const {
    std::lock_guard lock(mu_);
    std::vector<const Entry*> ordered;
    for (const auto& [id, e] : entries_) ordered.push_back(&e);
    std::sort(ordered.begin(), ordered.end(), [](auto a, auto b) { return a->order < b->order; });
    std::vector<ScanRecord> out;
    for (const auto* e : ordered) out.push_back(e->meta);
    return out;
}

std::vector<ScanRecord> ScanStore::training_records() const {
    std::vector<ScanRecord> out;
    for (auto& r : list()) {
        if (!r.confirmed || r.label == Label::kUnlabeled) continue;
        r.image = read_pgm(pgm_path(r.id));
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<std::string> ScanStore::update_batch_ids() const {
    std::vector<std::string> ids;
    for (const auto& r : list())
        if (r.confirmed && r.batch == Batch::kUpdate) ids.push_back(r.id);
    return ids;
}

void ScanStore::mark_used(const std::vector<std::string>& ids) {
    std::lock_guard lock(mu_);
    for (const auto& id : ids) {
        auto it = entries_.find(id);
        if (it == entries_.end() || it->second.meta.batch == Batch::kUsed) continue;
        it->second.meta.batch = Batch::kUsed;
        ScanRecord full = it->second.meta;
        full.image = read_pgm(pgm_path(id));
        write_sidecar(full);
        commit("used " + id);
    }
}

std::vector<ExportEntry> ScanStore::export_public(const fs::path& out_dir) const {
    fs::create_directories(out_dir);
    std::vector<ExportEntry> manifest;
    std::ostringstream o;
    for (const auto& r : list()) {
        if (r.section != Section::kPublic) continue;
        auto bytes = read_file(pgm_path(r.id));
        write_file_atomic(out_dir / (r.id + ".pgm"), bytes);
        manifest.push_back({r.id, r.label, r.section});
        o << r.id << "\t" << label_name(r.label) << "\t" << section_name(r.section) << "\n";
    }
    write_text_atomic(out_dir / "manifest.tsv", o.str());
    return manifest;
}

}  // namespace cxr
