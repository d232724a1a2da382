// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "cxr/binary_io.hpp"
#include "cxr/client.hpp"
#include "cxr/error.hpp"
#include "cxr/server.hpp"
#include "cxr/synthetic.hpp"

namespace cxr {

namespace fs = std::filesystem;

namespace {

constexpr double kForever = 1e15;

[[noreturn]] void bad(int line, const std::string& msg) {
    fail(ErrorCode::kInvalidArgument, "scenario line " + std::to_string(line) + ": " + msg);
}

double num(const ScenarioAction& a, const std::string& key, std::optional<double> fallback = std::nullopt) {
    auto it = a.args.find(key);
    if (it == a.args.end()) {
        if (fallback) return *fallback;
        bad(a.line, a.action + " needs " + key + "=");
    }
    try {
        std::size_t used = 0;
        double v = std::stod(it->second, &used);
        if (used == it->second.size() && std::isfinite(v)) return v;
    } catch (...) {
    }
    bad(a.line, key + " expects a number, got '" + it->second + "'");
}

std::uint64_t count(const ScenarioAction& a, const std::string& key, std::optional<double> fallback = std::nullopt) {
    double v = num(a, key, fallback);
    if (v < 0 || v != std::floor(v) || v > 1e12) bad(a.line, key + " expects a non-negative integer");
    return static_cast<std::uint64_t>(v);
}

Label label_arg(const ScenarioAction& a, Label fallback) {
    auto it = a.args.find("class");
    if (it == a.args.end()) return fallback;
    auto l = label_from_name(it->second);
    if (!l || *l == Label::kUnlabeled) bad(a.line, "class must be NORMAL or PNEUMONIA");
    return *l;
}

const std::map<std::string, std::set<std::string>>& allowed_keys() {
    static const std::map<std::string, std::set<std::string>> k = {
        {"link", {"bandwidth_kbps", "latency_ms"}},
        {"budget", {"scans_per_day", "scan_kb", "overhead_kb", "updates_per_week", "model_mb"}},
        {"model", {"seed"}},
        {"sync_every", {"seconds"}},
        {"scan", {"id", "class", "seed", "size"}},
        {"scans", {"count", "every", "seed", "size"}},
        {"confirm", {"id", "confirmed"}},
        {"outage_start", {}},
        {"outage_end", {}},
        {"publish", {"seed"}},
        {"retrain", {"force"}},
        {"sync", {}},
        {"end", {}},
    };
    return k;
}

std::string fmt_time(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "t=%.3f", t);
    return buf;
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
    Scenario sc;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    double open_start = 0.0;
    bool open_outage = false;
    bool have_end = false;
    std::vector<ScenarioAction> raw;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream f(line);
        std::string tok;
        if (!(f >> tok)) continue;
        ScenarioAction a;
        a.line = lineno;
        if (tok.rfind("t=", 0) != 0) bad(lineno, "expected t=<seconds>, got '" + tok + "'");
        try {
            std::size_t used = 0;
            a.t = std::stod(tok.substr(2), &used);
            if (used != tok.size() - 2) throw std::invalid_argument("trailing");
        } catch (...) {
            bad(lineno, "bad time '" + tok + "'");
        }
        if (!std::isfinite(a.t) || a.t < 0) bad(lineno, "time must be a non-negative number");
        if (!(f >> a.action)) bad(lineno, "missing action");
        auto spec = allowed_keys().find(a.action);
        if (spec == allowed_keys().end()) bad(lineno, "unknown action '" + a.action + "'");
        while (f >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos || eq == 0) bad(lineno, "expected key=value, got '" + tok + "'");
            auto key = tok.substr(0, eq);
            if (!spec->second.count(key)) bad(lineno, "unknown key '" + key + "' for " + a.action);
            if (a.args.count(key)) bad(lineno, "repeated key '" + key + "'");
            a.args[key] = tok.substr(eq + 1);
        }
        raw.push_back(std::move(a));
    }
    std::stable_sort(raw.begin(), raw.end(), [](const auto& x, const auto& y) { return x.t < y.t; });

    for (auto& a : raw) {
        if (have_end) bad(a.line, "action after end");
        if (a.action == "link") {
            if (a.t != 0) bad(a.line, "link must be set at t=0");
            sc.link.bandwidth_kbps = num(a, "bandwidth_kbps", sc.link.bandwidth_kbps);
            sc.link.latency_ms = num(a, "latency_ms", sc.link.latency_ms);
        } else if (a.action == "budget") {
            WeeklyBudget b;
            b.scans_per_day = num(a, "scans_per_day", b.scans_per_day);
            b.scan_kb = num(a, "scan_kb", b.scan_kb);
            b.overhead_kb = num(a, "overhead_kb", b.overhead_kb);
            b.updates_per_week = num(a, "updates_per_week", b.updates_per_week);
            b.model_mb = num(a, "model_mb", b.model_mb);
            sc.budget = b;
        } else if (a.action == "model") {
            if (a.t != 0) bad(a.line, "model must be set at t=0");
            sc.model_seed = count(a, "seed");
        } else if (a.action == "sync_every") {
            sc.sync_interval_s = num(a, "seconds");
            if (sc.sync_interval_s <= 0) bad(a.line, "seconds must be positive");
        } else if (a.action == "outage_start") {
            if (open_outage) bad(a.line, "outage already open");
            open_outage = true;
            open_start = a.t;
            sc.actions.push_back(a);
        } else if (a.action == "outage_end") {
            if (!open_outage) bad(a.line, "outage_end without outage_start");
            if (a.t <= open_start) bad(a.line, "empty outage");
            sc.link.outages.push_back({open_start, a.t});
            open_outage = false;
            sc.actions.push_back(a);
        } else if (a.action == "scans") {
            auto n = count(a, "count");
            double every = num(a, "every");
            if (every <= 0) bad(a.line, "every must be positive");
            auto seed = count(a, "seed", 1);
            for (std::uint64_t i = 0; i < n; ++i) {
                ScenarioAction s;
                s.t = a.t + every * double(i);
                s.action = "scan";
                s.line = a.line;
                s.args["seed"] = std::to_string(seed + i);
                s.args["class"] = i % 2 ? "NORMAL" : "PNEUMONIA";
                if (a.args.count("size")) s.args["size"] = a.args.at("size");
                sc.actions.push_back(s);
            }
        } else {
            if (a.action == "scan") {
                label_arg(a, Label::kPneumonia);
                count(a, "seed", 0);
                auto side = count(a, "size", 256);
                if (side < 8 || side > 4096) bad(a.line, "size must be within [8, 4096]");
                if (a.args.count("id") && !valid_scan_id(a.args.at("id"))) bad(a.line, "invalid scan id");
            } else if (a.action == "confirm") {
                if (!a.args.count("id")) bad(a.line, "confirm needs id=");
                auto c = count(a, "confirmed", 1);
                if (c > 1) bad(a.line, "confirmed must be 0 or 1");
            } else if (a.action == "publish") {
                count(a, "seed");
            } else if (a.action == "retrain") {
                count(a, "force", 0);
            } else if (a.action == "end") {
                have_end = true;
                sc.end = a.t;
            }
            sc.actions.push_back(a);
        }
    }
    if (!have_end) fail(ErrorCode::kInvalidArgument, "scenario has no end action");
    if (open_outage) sc.link.outages.push_back({open_start, kForever});
    // "scans" expansion can land out of order.
    std::stable_sort(sc.actions.begin(), sc.actions.end(), [](const auto& x, const auto& y) { return x.t < y.t; });
    for (const auto& a : sc.actions)
        if (a.t > sc.end) bad(a.line, "action after end");
    sc.link.validate();
    return sc;
}

Scenario load_scenario(const fs::path& path) { return parse_scenario(read_text_file(path)); }

double peak_throughput_kbps(const std::vector<Link::Busy>& h, double window) {
    // The rate is piecewise linear in the window position, so the maximum
    // sits where a window edge meets a transmission edge.
    std::vector<double> starts;
    for (const auto& b : h) {
        starts.push_back(b.start);
        starts.push_back(b.end - window);
    }
    double best = 0.0;
    for (double a : starts) {
        double e = a + window;
        double bits = 0.0;
        for (const auto& b : h) {
            if (b.end <= a) continue;
            if (b.start >= e) break;
            double len = b.end - b.start;
            double overlap = std::min(b.end, e) - std::max(b.start, a);
            bits += len > 0 ? 8.0 * double(b.bytes) * overlap / len : 0.0;
        }
        best = std::max(best, bits / window / 1000.0);
    }
    return best;
}

std::string ScenarioResult::event_log() const {
    std::string out;
    for (const auto& e : events) out += e + "\n";
    return out;
}

std::string ScenarioResult::summary() const {
    std::ostringstream o;
    std::size_t once = 0;
    for (const auto& id : local_ids)
        if (auto it = flush_receipts.find(id); it != flush_receipts.end() && it->second == 1) ++once;
    o << "scans=" << scans << "\n"
      << "served_server=" << served_server << "\n"
      << "served_local=" << served_local << "\n"
      << "flushed_exactly_once=" << once << "\n"
      << "cache_depth_end=" << cache_depth_end << "\n"
      << "installs=" << installs << "\n"
      << "client_matches_server=" << (client_matches_server ? 1 : 0) << "\n"
      << render_ledger_kv(ledger)
      << "uplink_offered=" << uplink_offered << "\n"
      << "uplink_delivered=" << uplink_delivered << "\n"
      << "downlink_offered=" << downlink_offered << "\n"
      << "downlink_delivered=" << downlink_delivered << "\n"
      << "frames_lost=" << frames_lost << "\n"
      << "ledger_consistent=" << (ledger_consistent ? 1 : 0) << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", max_window_kbps);
    o << "peak_kbps=" << buf << "\n";
    if (weekly_total_kb) {
        std::snprintf(buf, sizeof buf, "%.0f", *weekly_total_kb);
        o << "weekly_total_kb=" << buf << "\n";
    }
    return o.str();
}

ScenarioResult run_scenario(const Scenario& sc, const fs::path& workdir) {
    fs::create_directories(workdir);
    ScenarioResult res;

    ServerConfig scfg;
    scfg.storage_root = workdir / "server";
    scfg.seed = sc.model_seed;
    ServerCore server(scfg);

    SimNetwork net(sc.link, [&](const Frame& f) {
        if (f.type == MsgType::kFlushBatch) {
            try {
                ++res.flush_receipts[parse_flush_batch(f).request.scan_id];
            } catch (const Error&) {
            }
        }
        return server.handle(f);
    });

    auto log = [&](const std::string& e) { res.events.push_back(fmt_time(net.now()) + " " + e); };

    server.publish(ModelArtifact::reference(sc.model_seed));
    auto active = server.registry().active();
    log("publish version=" + std::to_string(active->entry.version) +
        " digest=" + to_hex(active->entry.compressed_digest).substr(0, 12) +
        " size=" + std::to_string(active->compressed.size()));

    ClientConfig ccfg;
    ccfg.storage = workdir / "client";
    ccfg.link = sc.link;
    ccfg.sync_interval_s = sc.sync_interval_s;
    std::vector<SimConnection*> conns;
    Client client(ccfg, [&](BandwidthLedger* ledger) {
        auto t = net.connect(ledger);
        conns.push_back(static_cast<SimConnection*>(t.get()));
        return t;
    });
    SimConnection* bg = conns.at(1);
    client.set_clock([&] { return net.now(); });
    client.set_event_sink(log);
    client.provision(active->compressed);
    log("provision version=" + std::to_string(client.status().model_version));

    EventQueue q;
    bool syncing = false;
    bool retry_pending = false;
    bool done = false;

    std::function<void()> step;
    auto start_sync = [&](const std::string& reason) {
        if (syncing) return;
        syncing = true;
        log("sync reason=" + reason);
        client.begin_sync();
        q.at(net.now(), step);
    };
    auto after_event = [&] {
        if (done) return;
        if (!syncing && client.wants_sync()) start_sync("flagged");
        if (!syncing && !client.online() && !retry_pending) {
            retry_pending = true;
            q.at(net.now() + sc.retry_interval_s, [&] {
                retry_pending = false;
                if (!client.online()) start_sync("retry");
            });
        }
    };
    step = [&] {
        if (done) return;
        auto s = client.sync_step();
        if (s == SyncStep::kMore) {
            q.at(std::max(net.now(), bg->next_arrival()), step);
            return;
        }
        syncing = false;
        const auto& r = client.last_sync();
        if (r.installed) ++res.installs;
        if (r.checked && !r.update_available && r.completed) ++res.update_checks_none;
        after_event();
    };

    for (double t = 0.0; t <= sc.end; t += sc.sync_interval_s)
        q.at(t, [&] {
            start_sync("periodic");
        });

    for (const auto& a : sc.actions) {
        q.at(a.t, [&, a] {
            if (done) return;
            if (a.action == "scan") {
                auto label = label_arg(a, Label::kPneumonia);
                auto side = static_cast<std::uint32_t>(count(a, "size", 256));
                auto img = synthetic_disc_image(label, count(a, "seed", 0), side, side);
                std::optional<std::string> id;
                if (a.args.count("id")) id = a.args.at("id");
                ++res.scans;
                try {
                    auto r = client.handle_scan(img, {}, id);
                    if (r.source == ScanSource::kServer) ++res.served_server;
                    else {
                        ++res.served_local;
                        res.local_ids.push_back(r.id);
                    }
                } catch (const Error& e) {
                    log(std::string("scan_error code=") + std::string(error_code_name(e.code())));
                }
            } else if (a.action == "confirm") {
                try {
                    client.record_confirmation(a.args.at("id"), count(a, "confirmed", 1) == 1);
                } catch (const Error& e) {
                    log("confirm_error id=" + a.args.at("id") + " code=" + std::string(error_code_name(e.code())));
                }
            } else if (a.action == "outage_start") {
                log("link_down");
            } else if (a.action == "outage_end") {
                log("link_up");
            } else if (a.action == "publish") {
                auto e = server.publish(ModelArtifact::reference(count(a, "seed")));
                log("publish version=" + std::to_string(e.version) +
                    " digest=" + to_hex(e.compressed_digest).substr(0, 12) +
                    " size=" + std::to_string(e.compressed_size));
            } else if (a.action == "retrain") {
                auto r = server.retrain_and_maybe_replace(count(a, "force", 0) == 1);
                log(std::string("retrain ran=") + (r.ran ? "1" : "0") + " replaced=" + (r.replaced ? "1" : "0") +
                    " version=" + std::to_string(r.version_after));
            } else if (a.action == "sync") {
                start_sync("manual");
            } else if (a.action == "end") {
                log("end");
                done = true;
            }
            after_event();
        });
    }

    while (!q.empty() && !done && q.next_time() <= sc.end) q.run_one(net.clock());
    if (!done) {
        net.clock() = std::max(net.now(), sc.end);
        log("end");
    }

    auto st = client.status();
    res.end_time = net.now();
    res.cache_depth_end = st.cache_depth;
    res.ledger = client.ledger().totals();
    res.model_bytes_down = res.ledger.model_bytes_down;
    res.client_matches_server = st.model_digest == server.registry().active()->entry.compressed_digest;
    res.uplink_offered = net.uplink().bytes_offered();
    res.uplink_delivered = net.uplink().bytes_delivered();
    res.downlink_offered = net.downlink().bytes_offered();
    res.downlink_delivered = net.downlink().bytes_delivered();
    res.frames_lost = net.uplink().frames_lost() + net.downlink().frames_lost();
    res.ledger_consistent =
        res.ledger.bytes_up == res.uplink_offered && res.ledger.bytes_down == res.downlink_delivered;
    res.max_window_kbps =
        std::max(peak_throughput_kbps(net.uplink().history()), peak_throughput_kbps(net.downlink().history()));
    if (sc.budget) res.weekly_total_kb = sc.budget->total_kb();
    return res;
}

}  // namespace cxr
