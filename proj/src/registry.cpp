// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/registry.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cxr/binary_io.hpp"
#include "cxr/error.hpp"

namespace cxr {

namespace fs = std::filesystem;

ModelRegistry::ModelRegistry(fs::path root, CompressionConfig compression)
    : root_(std::move(root)), compression_(compression) {
    compression_.validate();
    fs::create_directories(root_ / "objects");
    load_index();
}

void ModelRegistry::load_index() {
    auto path = root_ / "index.tsv";
    if (!fs::exists(path)) return;
    std::istringstream in(read_text_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("active=", 0) == 0) {
            active_version_ = std::stoull(line.substr(7));
            continue;
        }
        std::istringstream f(line);
        RegistryEntry e;
        std::string d, cd;
        f >> e.version >> d >> cd >> e.compressed_size;
        auto dd = digest_from_hex(d);
        auto cdd = digest_from_hex(cd);
        require(dd && cdd && !f.fail(), ErrorCode::kFormat, "bad registry index line: " + line);
        e.digest = *dd;
        e.compressed_digest = *cdd;
        entries_.push_back(e);
    }
    if (active_version_) {
        auto it = std::find_if(entries_.begin(), entries_.end(),
                               [&](const RegistryEntry& e) { return e.version == active_version_; });
        require(it != entries_.end(), ErrorCode::kCorrupt, "registry index names a missing active version");
        active_ = read_entry(*it);
    }
}

void ModelRegistry::write_index() const {
    std::ostringstream o;
    for (const auto& e : entries_)
        o << e.version << "\t" << to_hex(e.digest) << "\t" << to_hex(e.compressed_digest) << "\t"
          << e.compressed_size << "\n";
    o << "active=" << active_version_ << "\n";
    write_text_atomic(root_ / "index.tsv", o.str());
}

std::shared_ptr<const ActiveModel> ModelRegistry::read_entry(const RegistryEntry& e) const {
    auto m = std::make_shared<ActiveModel>();
    m->entry = e;
    m->model = ModelArtifact::load(root_ / "objects" / (to_hex(e.digest) + ".cxrm"));
    require(m->model.digest() == e.digest, ErrorCode::kCorrupt,
            "registry object for version " + std::to_string(e.version) + " does not match its digest");
    m->compressed = read_file(root_ / "objects" / (to_hex(e.compressed_digest) + ".cxrc"));
    auto decoded = decompress_model(m->compressed);
    require(decoded.compressed_digest == e.compressed_digest && decoded.original_digest == e.digest,
            ErrorCode::kCorrupt, "compressed object for version " + std::to_string(e.version) + " is inconsistent");
    return m;
}

RegistryEntry ModelRegistry::publish(ModelArtifact artifact) {
    std::lock_guard lock(mu_);
    std::uint64_t latest = entries_.empty() ? 0 : entries_.back().version;
    artifact.set_version(latest + 1);
    if (is_zero(artifact.parent_digest()) && active_) artifact.set_parent_digest(active_->entry.digest);
    artifact.seal();

    auto cm = compress_model(artifact, compression_);
    auto m = std::make_shared<ActiveModel>();
    m->entry.version = artifact.version();
    m->entry.digest = artifact.digest();
    m->entry.compressed_digest = cm.compressed_digest;
    m->entry.compressed_size = cm.compressed_size;

    // Objects first, index last: a crash in between leaves only orphans.
    artifact.save(root_ / "objects" / (to_hex(m->entry.digest) + ".cxrm"));
    write_file_atomic(root_ / "objects" / (to_hex(cm.compressed_digest) + ".cxrc"), cm.bytes);
    entries_.push_back(m->entry);
    active_version_ = m->entry.version;
    write_index();

    m->model = std::move(artifact);
    m->compressed = std::move(cm.bytes);
    active_ = m;
    return m->entry;
}

void ModelRegistry::activate(std::uint64_t version) {
    std::lock_guard lock(mu_);
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const RegistryEntry& e) { return e.version == version; });
    require(it != entries_.end(), ErrorCode::kNotFound, "no model version " + std::to_string(version));
    auto m = read_entry(*it);
    active_version_ = version;
    write_index();
    active_ = std::move(m);
}

std::shared_ptr<const ActiveModel> ModelRegistry::active() const {
    std::lock_guard lock(mu_);
    return active_;
}

std::vector<RegistryEntry> ModelRegistry::versions() const {
    std::lock_guard lock(mu_);
    return entries_;
}

std::uint64_t ModelRegistry::latest_version() const {
    std::lock_guard lock(mu_);
    return entries_.empty() ? 0 : entries_.back().version;
}

ActiveModel ModelRegistry::load(std::uint64_t version) const {
    std::lock_guard lock(mu_);
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const RegistryEntry& e) { return e.version == version; });
    require(it != entries_.end(), ErrorCode::kNotFound, "no model version " + std::to_string(version));
    return *read_entry(*it);
}

}  // namespace cxr
