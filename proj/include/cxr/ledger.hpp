// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <array>
#include <cstdint>
#include <mutex>
#include <string>

#include "cxr/protocol.hpp"

namespace cxr {

// scans_per_day * (per_scan_kb + overhead_kb) * 7 + updates_per_week * model_mb * 1024
double ledger_weekly_total(double scans_per_day, double per_scan_kb, double overhead_kb, double updates_per_week,
                           double model_mb);

struct LedgerTotals {
    std::uint64_t bytes_up = 0;
    std::uint64_t bytes_down = 0;
    std::uint64_t frames_up = 0;
    std::uint64_t frames_down = 0;
    std::uint64_t model_bytes_down = 0;  // ModelChunk data only
    std::uint64_t scans_up = 0;          // PredictReq + FlushBatch frames
    std::array<std::uint64_t, 11> up_by_type{};
    std::array<std::uint64_t, 11> down_by_type{};

    bool operator==(const LedgerTotals&) const = default;
};

// Byte accounting for every frame a node sends or receives. Thread-safe.
class BandwidthLedger {
public:
    void sent(const Frame& f, std::size_t wire_bytes);
    void received(const Frame& f, std::size_t wire_bytes);
    LedgerTotals totals() const;
    void reset();

private:
    mutable std::mutex mu_;
    LedgerTotals t_;
};

std::string render_ledger_kv(const LedgerTotals& t);

}  // namespace cxr
