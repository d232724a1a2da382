// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cxr/ledger.hpp"
#include "cxr/netsim.hpp"

namespace cxr {

// One line of a scenario script: "t=<seconds> <action> [key=value ...]".
struct ScenarioAction {
    double t = 0.0;
    std::string action;
    std::map<std::string, std::string> args;
    int line = 0;
};

struct WeeklyBudget {
    double scans_per_day = 100;
    double scan_kb = 17;
    double overhead_kb = 1;
    double updates_per_week = 1;
    double model_mb = 5;

    double total_kb() const {
        return ledger_weekly_total(scans_per_day, scan_kb, overhead_kb, updates_per_week, model_mb);
    }
};

struct Scenario {
    LinkProfile link;
    std::uint64_t model_seed = 1;
    double end = 0.0;
    double sync_interval_s = 6 * 3600.0;
    double retry_interval_s = 60.0;  // probe cadence while offline
    std::optional<WeeklyBudget> budget;
    std::vector<ScenarioAction> actions;  // ordered by time, ties in file order
};

// Validates actions and arguments; outages become part of the link profile.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);

struct ScenarioResult {
    std::vector<std::string> events;  // "t=<s> <event> k=v ..."
    std::size_t scans = 0;
    std::size_t served_server = 0;
    std::size_t served_local = 0;
    // FlushBatch frames that reached the server, per scan id.
    std::map<std::string, std::size_t> flush_receipts;
    std::vector<std::string> local_ids;
    std::size_t cache_depth_end = 0;
    std::size_t installs = 0;
    std::uint64_t model_bytes_down = 0;
    std::uint64_t update_checks_none = 0;
    bool client_matches_server = false;  // compressed digests at the end
    LedgerTotals ledger;
    std::uint64_t uplink_offered = 0;
    std::uint64_t uplink_delivered = 0;
    std::uint64_t downlink_offered = 0;
    std::uint64_t downlink_delivered = 0;
    std::uint64_t frames_lost = 0;
    // Ledger offers match the uplink and ledger receipts match the downlink.
    bool ledger_consistent = false;
    double max_window_kbps = 0.0;  // peak 1 s throughput on either link
    std::optional<double> weekly_total_kb;
    double end_time = 0.0;

    std::string event_log() const;
    std::string summary() const;  // key=value lines
};

// Runs against a fresh server and client rooted in `workdir`.
ScenarioResult run_scenario(const Scenario& sc, const std::filesystem::path& workdir);

// Peak throughput of delivered transmissions over any window of `window`
// seconds, in kbit/s.
double peak_throughput_kbps(const std::vector<Link::Busy>& history, double window = 1.0);

}  // namespace cxr
