// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/ledger.hpp"

#include <sstream>

namespace cxr {

double ledger_weekly_total(double scans_per_day, double per_scan_kb, double overhead_kb, double updates_per_week,
                           double model_mb) {
    return scans_per_day * (per_scan_kb + overhead_kb) * 7.0 + updates_per_week * model_mb * 1024.0;
}

void BandwidthLedger::sent(const Frame& f, std::size_t wire_bytes) {
    std::lock_guard lock(mu_);
    t_.bytes_up += wire_bytes;
    ++t_.frames_up;
    t_.up_by_type[static_cast<std::size_t>(f.type) % t_.up_by_type.size()] += wire_bytes;
    if (f.type == MsgType::kPredictReq || f.type == MsgType::kFlushBatch) ++t_.scans_up;
}

void BandwidthLedger::received(const Frame& f, std::size_t wire_bytes) {
    std::lock_guard lock(mu_);
    t_.bytes_down += wire_bytes;
    ++t_.frames_down;
    t_.down_by_type[static_cast<std::size_t>(f.type) % t_.down_by_type.size()] += wire_bytes;
    // digest + offset + total precede the data
    if (f.type == MsgType::kModelChunk && f.payload.size() > 48) t_.model_bytes_down += f.payload.size() - 48;
}

LedgerTotals BandwidthLedger::totals() const {
    std::lock_guard lock(mu_);
    return t_;
}

void BandwidthLedger::reset() {
    std::lock_guard lock(mu_);
    t_ = {};
}

std::string render_ledger_kv(const LedgerTotals& t) {
    std::ostringstream o;
    o << "bytes_up=" << t.bytes_up << "\n";
    o << "bytes_down=" << t.bytes_down << "\n";
    o << "frames_up=" << t.frames_up << "\n";
    o << "frames_down=" << t.frames_down << "\n";
    o << "model_bytes_down=" << t.model_bytes_down << "\n";
    o << "scans_up=" << t.scans_up << "\n";
    return o.str();
}

}  // namespace cxr
