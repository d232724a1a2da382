// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cxr/error.hpp"
#include "cxr/random.hpp"

namespace cxr {

std::string_view section_name(Section s) { return s == Section::kPublic ? "public" : "private"; }

std::optional<Section> section_from_name(std::string_view s) {
    if (s == "public") return Section::kPublic;
    if (s == "private") return Section::kPrivate;
    return std::nullopt;
}

std::string_view batch_name(Batch b) { return b == Batch::kUsed ? "used" : "update"; }

std::optional<Batch> batch_from_name(std::string_view s) {
    if (s == "used") return Batch::kUsed;
    if (s == "update") return Batch::kUpdate;
    return std::nullopt;
}

bool valid_scan_id(std::string_view id) {
    if (id.empty() || id.size() > 64 || id == "." || id == "..") return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' || c == '_' ||
               c == '-';
    });
}

std::string encode_sidecar(const ScanRecord& r) {
    std::ostringstream o;
    o << "id=" << r.id << "\n";
    o << "label=" << label_name(r.label) << "\n";
    o << "confirmed=" << (r.confirmed ? 1 : 0) << "\n";
    o << "section=" << section_name(r.section) << "\n";
    o << "batch=" << batch_name(r.batch) << "\n";
    o << "width=" << r.image.width() << "\n";
    o << "height=" << r.image.height() << "\n";
    if (!r.source_id.empty()) o << "source=" << r.source_id << "\n";
    const auto& d = r.diversity;
    if (d.hospital) o << "hospital=" << *d.hospital << "\n";
    if (d.geography) o << "geography=" << *d.geography << "\n";
    if (d.age) o << "age=" << *d.age << "\n";
    if (d.sex) o << "sex=" << *d.sex << "\n";
    if (d.scanner_brand) o << "scanner_brand=" << *d.scanner_brand << "\n";
    return o.str();
}

ScanRecord decode_sidecar(std::string_view text) {
    ScanRecord r;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        require(eq != std::string_view::npos, ErrorCode::kFormat, "sidecar line without '=': " + std::string(line));
        auto key = line.substr(0, eq);
        auto val = std::string(line.substr(eq + 1));
        if (key == "id") {
            r.id = val;
        } else if (key == "label") {
            auto l = label_from_name(val);
            require(l.has_value(), ErrorCode::kFormat, "bad label '" + val + "'");
            r.label = *l;
        } else if (key == "confirmed") {
            r.confirmed = val == "1" || val == "true";
        } else if (key == "section") {
            auto s = section_from_name(val);
            require(s.has_value(), ErrorCode::kFormat, "bad section '" + val + "'");
            r.section = *s;
        } else if (key == "batch") {
            auto b = batch_from_name(val);
            require(b.has_value(), ErrorCode::kFormat, "bad batch '" + val + "'");
            r.batch = *b;
        } else if (key == "source") {
            r.source_id = val;
        } else if (key == "hospital") {
            r.diversity.hospital = val;
        } else if (key == "geography") {
            r.diversity.geography = val;
        } else if (key == "age") {
            std::uint32_t age = 0;
            auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), age);
            require(ec == std::errc() && p == val.data() + val.size(), ErrorCode::kFormat, "bad age '" + val + "'");
            r.diversity.age = age;
        } else if (key == "sex") {
            r.diversity.sex = val;
        } else if (key == "scanner_brand") {
            r.diversity.scanner_brand = val;
        }
        // width/height and unknown keys are informational.
    }
    require(valid_scan_id(r.id), ErrorCode::kFormat, "sidecar has an invalid id '" + r.id + "'");
    return r;
}

std::size_t RecordSet::count(Label l) const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [l](const ScanRecord& r) { return r.label == l; }));
}

void SplitSpec::validate() const {
    require(test_fraction > 0.0 && test_fraction < 1.0, ErrorCode::kInvalidArgument, "test fraction must be in (0, 1)");
}

std::pair<RecordSet, RecordSet> split(std::span<const ScanRecord> records, const SplitSpec& spec) {
    spec.validate();
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < records.size(); ++i) {
        require(records[i].label != Label::kUnlabeled, ErrorCode::kInvalidArgument,
                "cannot split unlabeled record '" + records[i].id + "'");
        by_class[class_index(records[i].label)].push_back(i);
    }
    require(records.size() >= 2 && !by_class[0].empty() && !by_class[1].empty(), ErrorCode::kInvalidArgument,
            "stratified split needs at least one record of each class");

    const auto n = static_cast<double>(records.size());
    const auto total_test = static_cast<std::size_t>(std::llround(spec.test_fraction * n));
    // Largest-remainder apportionment of the test quota.
    std::array<std::size_t, 2> quota{};
    std::array<double, 2> remainder{};
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < 2; ++c) {
        double exact = static_cast<double>(total_test) * by_class[c].size() / n;
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        remainder[c] = exact - quota[c];
        assigned += quota[c];
    }
    for (std::size_t left = total_test - assigned; left > 0; --left) {
        std::size_t c = remainder[0] >= remainder[1] ? 0 : 1;
        ++quota[c];
        remainder[c] = -1.0;
    }

    RecordSet train{SetRole::kTrain, {}};
    RecordSet test{SetRole::kTest, {}};
    Rng rng(spec.seed);
    for (std::size_t c = 0; c < 2; ++c) {
        auto idx = by_class[c];
        rng.shuffle(idx.begin(), idx.end());
        std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(quota[c]));
        std::sort(idx.begin() + static_cast<std::ptrdiff_t>(quota[c]), idx.end());
        for (std::size_t k = 0; k < idx.size(); ++k)
            (k < quota[c] ? test : train).records.push_back(records[idx[k]]);
    }
    return {std::move(train), std::move(test)};
}

RecordSet rebalance(const RecordSet& train, double target_ratio, std::uint64_t seed) {
    require(train.role != SetRole::kTest, ErrorCode::kLeakage, "refusing to resample a test set");
    require(target_ratio > 0.0 && target_ratio < 1.0, ErrorCode::kInvalidArgument, "target ratio must be in (0, 1)");
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < train.records.size(); ++i) {
        require(train.records[i].label != Label::kUnlabeled, ErrorCode::kInvalidArgument,
                "cannot rebalance unlabeled record '" + train.records[i].id + "'");
        by_class[class_index(train.records[i].label)].push_back(i);
    }
    require(!by_class[0].empty() && !by_class[1].empty(), ErrorCode::kInvalidArgument,
            "rebalancing needs both classes present");

    const std::size_t minority = by_class[0].size() <= by_class[1].size() ? 0 : 1;
    const std::size_t majority = 1 - minority;
    const std::size_t total = train.records.size();
    std::array<std::size_t, 2> want{};
    want[minority] = static_cast<std::size_t>(std::llround(target_ratio * static_cast<double>(total)));
    want[minority] = std::clamp<std::size_t>(want[minority], 1, total - 1);
    want[majority] = total - want[minority];

    RecordSet out{SetRole::kTrain, {}};
    out.records.reserve(total);
    Rng rng(seed);
    // Majority first (subsample), then minority (duplicate), as the classes
    // fall; the same code handles either direction for each class.
    for (std::size_t c : {majority, minority}) {
        auto idx = by_class[c];
        if (want[c] == idx.size()) {
            for (auto i : idx) out.records.push_back(train.records[i]);
            continue;
        }
        rng.shuffle(idx.begin(), idx.end());
        if (want[c] < idx.size()) {
            idx.resize(want[c]);
            std::sort(idx.begin(), idx.end());
            for (auto i : idx) out.records.push_back(train.records[i]);
        } else {
            for (auto i : by_class[c]) out.records.push_back(train.records[i]);
            const std::size_t extra = want[c] - idx.size();
            for (std::size_t k = 0; k < extra; ++k) {
                ScanRecord dup = train.records[idx[k % idx.size()]];
                dup.source_id = dup.origin_id();
                dup.id = dup.source_id + ".dup" + std::to_string(k);
                out.records.push_back(std::move(dup));
            }
        }
    }
    return out;
}

RecordSet expand_with_augmentation(const RecordSet& train, const AugmentConfig& cfg, std::size_t copies_per_record) {
    require(train.role != SetRole::kTest, ErrorCode::kLeakage, "refusing to augment a test set");
    cfg.validate();
    RecordSet out{train.role, train.records};
    out.records.reserve(train.records.size() * (1 + copies_per_record));
    for (std::size_t i = 0; i < train.records.size(); ++i) {
        const auto& src = train.records[i];
        Rng rng(Rng::mix(cfg.seed, i));
        for (std::size_t k = 0; k < copies_per_record; ++k) {
            ScanRecord aug = src;
            aug.image = augment(src.image, cfg, rng);
            aug.source_id = src.origin_id();
            aug.id = src.id + ".aug" + std::to_string(k);
            out.records.push_back(std::move(aug));
        }
    }
    return out;
}

ImageSet to_image_set(const RecordSet& set) {
    ImageSet s;
    for (const auto& r : set.records) s.add(r.image, r.label);
    return s;
}

std::vector<ScanRecord> load_labeled_directory(const std::filesystem::path& dir, const PreprocessConfig& cfg) {
    namespace fs = std::filesystem;
    require(fs::is_directory(dir), ErrorCode::kNotFound, "dataset directory not found: " + dir.string());
    std::vector<ScanRecord> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".pgm") continue;
        std::optional<Label> label;
        for (const auto& part : fs::relative(e.path(), dir).parent_path()) {
            if (part == "NORMAL") label = Label::kNormal;
            else if (part == "PNEUMONIA") label = Label::kPneumonia;
        }
        if (!label) continue;
        auto rel = fs::relative(e.path(), dir);
        rel.replace_extension();
        std::string id;
        for (char c : rel.generic_string()) id += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
        if (id.size() > 64) id = id.substr(id.size() - 64);
        ScanRecord r;
        r.id = id;
        r.image = preprocess(read_pgm(e.path()), cfg);
        r.label = *label;
        r.confirmed = true;
        r.batch = Batch::kUsed;
        out.push_back(std::move(r));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < out.size(); ++i)
        require(out[i].id != out[i - 1].id, ErrorCode::kInvalidArgument, "duplicate id after sanitizing: " + out[i].id);
    return out;
}

}  // namespace cxr
