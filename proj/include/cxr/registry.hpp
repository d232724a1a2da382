// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "cxr/compress.hpp"
#include "cxr/model.hpp"

namespace cxr {

struct RegistryEntry {
    std::uint64_t version = 0;
    Digest digest{};             // full artifact
    Digest compressed_digest{};  // what clients compare against
    std::size_t compressed_size = 0;
};

// A published version with both forms loaded.
struct ActiveModel {
    RegistryEntry entry;
    ModelArtifact model;
    Bytes compressed;
};

// Content-addressed store of model versions:
//   objects/<hex>.cxrm   full artifact by its digest
//   objects/<hex>.cxrc   compressed counterpart by its own digest
//   index.tsv            version, digests, size; "active=<version>"
//
// The compressed file is written before a version can become active.
class ModelRegistry {
public:
    ModelRegistry(std::filesystem::path root, CompressionConfig compression = {});

    // Stamps version latest+1, seals, stores both forms and activates.
    RegistryEntry publish(ModelArtifact artifact);
    // Re-activates an earlier version after re-verifying its files.
    void activate(std::uint64_t version);

    std::shared_ptr<const ActiveModel> active() const;
    std::vector<RegistryEntry> versions() const;
    std::uint64_t latest_version() const;
    // Loads a stored version, verifying both digests.
    ActiveModel load(std::uint64_t version) const;

    const std::filesystem::path& root() const { return root_; }

private:
    void load_index();
    void write_index() const;
    std::shared_ptr<const ActiveModel> read_entry(const RegistryEntry& e) const;

    std::filesystem::path root_;
    CompressionConfig compression_;
    mutable std::mutex mu_;
    std::vector<RegistryEntry> entries_;
    std::uint64_t active_version_ = 0;
    std::shared_ptr<const ActiveModel> active_;
};

}  // namespace cxr
