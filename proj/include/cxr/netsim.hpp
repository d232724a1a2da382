// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <queue>
#include <string>
#include <vector>

#include "cxr/ledger.hpp"
#include "cxr/transport.hpp"

namespace cxr {

struct Outage {
    double start = 0.0;  // seconds, inclusive
    double end = 0.0;    // seconds, exclusive

    bool operator==(const Outage&) const = default;
};

struct LinkProfile {
    double bandwidth_kbps = 56.0;
    double latency_ms = 100.0;  // one way
    std::vector<Outage> outages;

    // Positive bandwidth, non-negative latency, ordered disjoint outages.
    void validate() const;
    bool up_at(double t) const;
    // First outage starting in (t, horizon), if any.
    const Outage* outage_between(double t, double horizon) const;
    double serialization_time(std::uint64_t bytes) const { return double(bytes) * 8.0 / (bandwidth_kbps * 1000.0); }
};

// bytes * 8 / (kbps * 1000) + 2 * latency, with serialization paused while
// the link is down. `start` places the transfer on the outage schedule.
double transfer_time(std::uint64_t bytes, const LinkProfile& profile, double start = 0.0);

struct Delivery {
    bool delivered = false;
    double start = 0.0;    // first bit on the wire
    double end = 0.0;      // last bit on the wire (or the cut)
    double arrival = 0.0;  // end + latency
};

// One direction of a link: frames are serialized back to back, a frame is
// lost if the link is down when it would start or goes down before it ends.
class Link {
public:
    explicit Link(const LinkProfile* profile) : profile_(profile) {}

    Delivery send(double t, std::size_t bytes);

    double free_at() const { return free_at_; }
    std::uint64_t bytes_offered() const { return offered_; }
    std::uint64_t bytes_delivered() const { return delivered_; }
    std::uint64_t frames_lost() const { return lost_; }

    struct Busy {
        double start;
        double end;
        std::size_t bytes;
    };
    // Delivered transmissions, in order.
    const std::vector<Busy>& history() const { return history_; }

private:
    const LinkProfile* profile_;
    double free_at_ = 0.0;
    std::uint64_t offered_ = 0;
    std::uint64_t delivered_ = 0;
    std::uint64_t lost_ = 0;
    std::vector<Busy> history_;
};

// Timed callbacks on a virtual clock; ties run in scheduling order.
class EventQueue {
public:
    void at(double t, std::function<void()> fn);
    bool empty() const { return q_.empty(); }
    double next_time() const { return q_.top().t; }
    // Pops the earliest event, advances the clock to it (never backwards)
    // and runs it.
    void run_one(double& clock);
    std::size_t size() const { return q_.size(); }

private:
    struct Item {
        double t;
        std::uint64_t seq;
        std::function<void()> fn;
        bool operator>(const Item& o) const { return t != o.t ? t > o.t : seq > o.seq; }
    };
    std::priority_queue<Item, std::vector<Item>, std::greater<>> q_;
    std::uint64_t seq_ = 0;
};

// Client <-> server path over an uplink and a downlink sharing a profile.
// The clock is owned here; transports advance it as the client waits.
class SimNetwork {
public:
    SimNetwork(LinkProfile profile, FrameHandler server);

    double now() const { return now_; }
    double& clock() { return now_; }
    const LinkProfile& profile() const { return profile_; }
    Link& uplink() { return up_; }
    Link& downlink() { return down_; }

    // Client-side connection; the ledger sees every frame the client offers
    // and every frame delivered to it.
    std::unique_ptr<Transport> connect(BandwidthLedger* ledger);

private:
    friend class SimConnection;

    LinkProfile profile_;
    FrameHandler server_;
    Link up_;
    Link down_;
    double now_ = 0.0;
};

class SimConnection : public Transport {
public:
    SimConnection(SimNetwork& net, BandwidthLedger* ledger) : net_(net), ledger_(ledger) {}

    Exchange request(const Frame& req, double timeout_s) override;
    Exchange next(double timeout_s) override;
    void send(const Frame& f) override;
    void reset() override { pending_.clear(); }

    // Arrival time of the next frame in flight, or a negative value.
    double next_arrival() const { return pending_.empty() ? -1.0 : pending_.front().arrival; }

private:
    struct InFlight {
        double arrival;
        Frame frame;
    };

    void dispatch(const Frame& req, double arrival);

    SimNetwork& net_;
    BandwidthLedger* ledger_;
    std::deque<InFlight> pending_;
};

}  // namespace cxr
