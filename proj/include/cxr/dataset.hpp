// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cxr/imaging.hpp"
#include "cxr/labels.hpp"
#include "cxr/train.hpp"

namespace cxr {

enum class Section : std::uint8_t { kPublic = 0, kPrivate = 1 };
enum class Batch : std::uint8_t { kUsed = 0, kUpdate = 1 };

std::string_view section_name(Section s);
std::optional<Section> section_from_name(std::string_view s);
std::string_view batch_name(Batch b);
std::optional<Batch> batch_from_name(std::string_view s);

struct DiversityMeta {
    std::optional<std::string> hospital;
    std::optional<std::string> geography;
    std::optional<std::uint32_t> age;
    std::optional<std::string> sex;
    std::optional<std::string> scanner_brand;

    bool operator==(const DiversityMeta&) const = default;
};

struct ScanRecord {
    std::string id;
    GrayImage image;
    Label label = Label::kUnlabeled;
    bool confirmed = false;
    Section section = Section::kPrivate;
    Batch batch = Batch::kUpdate;
    DiversityMeta diversity;
    // Id of the record this one was duplicated or augmented from; empty for originals.
    std::string source_id;

    const std::string& origin_id() const { return source_id.empty() ? id : source_id; }
};

// Ids are 1-64 characters from [A-Za-z0-9._-]; they double as file names.
bool valid_scan_id(std::string_view id);

// Sidecar metadata: key=value lines (everything except the raster).
std::string encode_sidecar(const ScanRecord& r);
// Fills all fields except the image.
ScanRecord decode_sidecar(std::string_view text);

enum class SetRole { kTrain, kTest };

struct RecordSet {
    SetRole role = SetRole::kTrain;
    std::vector<ScanRecord> records;

    std::size_t size() const { return records.size(); }
    std::size_t count(Label l) const;
};

struct SplitSpec {
    double test_fraction = 0.2;
    std::uint64_t seed = 0;

    void validate() const;
};

// Stratified, seeded train/test split. The test size is round(fraction * n),
// apportioned across classes by largest remainder.
std::pair<RecordSet, RecordSet> split(std::span<const ScanRecord> records, const SplitSpec& spec);

// Undersamples one class and duplicates the other until the minority class
// makes up target_ratio of the (unchanged) set size, within one record.
// Refuses sets tagged as test.
RecordSet rebalance(const RecordSet& train, double target_ratio, std::uint64_t seed);

// Appends copies_per_record augmented variants of every record; variants
// carry their source id.
RecordSet expand_with_augmentation(const RecordSet& train, const AugmentConfig& cfg, std::size_t copies_per_record);

ImageSet to_image_set(const RecordSet& set);

// Reads <dir>/NORMAL/*.pgm and <dir>/PNEUMONIA/*.pgm (any nesting below
// those names, e.g. train/NORMAL), preprocessing each image. Ids come from
// the relative path. Records are sorted by id.
std::vector<ScanRecord> load_labeled_directory(const std::filesystem::path& dir, const PreprocessConfig& cfg);

}  // namespace cxr
