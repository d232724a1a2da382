// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/netsim.hpp"

#include <algorithm>
#include <cmath>

#include "cxr/error.hpp"

namespace cxr {

void LinkProfile::validate() const {
    require(bandwidth_kbps > 0.0 && std::isfinite(bandwidth_kbps), ErrorCode::kInvalidArgument,
            "link bandwidth must be positive");
    require(latency_ms >= 0.0 && std::isfinite(latency_ms), ErrorCode::kInvalidArgument,
            "link latency must be non-negative");
    for (std::size_t i = 0; i < outages.size(); ++i) {
        require(outages[i].end > outages[i].start, ErrorCode::kInvalidArgument, "outage must end after it starts");
        if (i > 0)
            require(outages[i].start >= outages[i - 1].end, ErrorCode::kInvalidArgument,
                    "outages must be ordered and non-overlapping");
    }
}

bool LinkProfile::up_at(double t) const {
    for (const auto& o : outages)
        if (t >= o.start && t < o.end) return false;
    return true;
}

const Outage* LinkProfile::outage_between(double t, double horizon) const {
    for (const auto& o : outages)
        if (o.start > t && o.start < horizon) return &o;
    return nullptr;
}

double transfer_time(std::uint64_t bytes, const LinkProfile& profile, double start) {
    double remaining = profile.serialization_time(bytes);
    double t = start;
    for (const auto& o : profile.outages) {
        if (o.end <= t) continue;
        if (o.start <= t) {
            t = o.end;
            continue;
        }
        if (o.start >= t + remaining) break;
        remaining -= o.start - t;
        t = o.end;
    }
    return t + remaining - start + 2.0 * profile.latency_ms / 1000.0;
}

Delivery Link::send(double t, std::size_t bytes) {
    Delivery d;
    d.start = std::max(t, free_at_);
    offered_ += bytes;
    if (!profile_->up_at(d.start)) {
        ++lost_;
        d.end = d.arrival = d.start;
        return d;
    }
    d.end = d.start + profile_->serialization_time(bytes);
    if (const Outage* o = profile_->outage_between(d.start, d.end)) {
        ++lost_;
        d.end = d.arrival = o->start;
        free_at_ = o->start;
        return d;
    }
    free_at_ = d.end;
    d.arrival = d.end + profile_->latency_ms / 1000.0;
    d.delivered = true;
    delivered_ += bytes;
    history_.push_back({d.start, d.end, bytes});
    return d;
}

void EventQueue::at(double t, std::function<void()> fn) { q_.push({t, seq_++, std::move(fn)}); }

void EventQueue::run_one(double& clock) {
    // Copy out before pop; the callback may schedule more events.
    auto fn = q_.top().fn;
    clock = std::max(clock, q_.top().t);
    q_.pop();
    fn();
}

SimNetwork::SimNetwork(LinkProfile profile, FrameHandler server)
    : profile_(std::move(profile)), server_(std::move(server)), up_(&profile_), down_(&profile_) {
    profile_.validate();
}

std::unique_ptr<Transport> SimNetwork::connect(BandwidthLedger* ledger) {
    return std::make_unique<SimConnection>(*this, ledger);
}

void SimConnection::dispatch(const Frame& req, double arrival) {
    auto responses = net_.server_(req);
    double t = arrival;
    for (auto& r : responses) {
        auto bytes = encode_frame(r).size();
        auto d = net_.down_.send(t, bytes);
        // A frame cut by an outage breaks the connection; the server stops.
        if (!d.delivered) break;
        if (ledger_) ledger_->received(r, bytes);
        pending_.push_back({d.arrival, std::move(r)});
        t = d.end;
    }
}

Exchange SimConnection::request(const Frame& req, double timeout_s) {
    pending_.clear();
    auto bytes = encode_frame(req).size();
    if (ledger_) ledger_->sent(req, bytes);
    double t0 = net_.now_;
    auto d = net_.up_.send(t0, bytes);
    if (!d.delivered) {
        net_.now_ = t0 + timeout_s;
        return {ExchangeStatus::kTimeout, {}, "request lost"};
    }
    dispatch(req, d.arrival);
    return next(std::max(0.0, t0 + timeout_s - net_.now_));
}

Exchange SimConnection::next(double timeout_s) {
    double deadline = net_.now_ + timeout_s;
    if (pending_.empty() || pending_.front().arrival > deadline) {
        pending_.clear();
        net_.now_ = deadline;
        return {ExchangeStatus::kTimeout, {}, "no response"};
    }
    auto f = std::move(pending_.front());
    pending_.pop_front();
    net_.now_ = std::max(net_.now_, f.arrival);
    return {ExchangeStatus::kOk, std::move(f.frame), {}};
}

void SimConnection::send(const Frame& f) {
    auto bytes = encode_frame(f).size();
    if (ledger_) ledger_->sent(f, bytes);
    auto d = net_.up_.send(net_.now_, bytes);
    if (d.delivered) net_.server_(f);
}

Exchange LoopbackTransport::request(const Frame& req, double timeout_s) {
    pending_.clear();
    if (!online_) return {ExchangeStatus::kDisconnected, {}, "offline"};
    auto wire = encode_frame(req);
    if (ledger_) ledger_->sent(req, wire.size());
    for (auto& r : handler_(decode_frame(wire))) pending_.push_back(std::move(r));
    return next(timeout_s);
}

Exchange LoopbackTransport::next(double) {
    if (!online_ || pending_.empty() || drop_after_ == 0) {
        pending_.clear();
        return {online_ ? ExchangeStatus::kTimeout : ExchangeStatus::kDisconnected, {}, "no response"};
    }
    if (drop_after_ != static_cast<std::size_t>(-1)) --drop_after_;
    auto wire = encode_frame(pending_.front());
    pending_.pop_front();
    auto f = decode_frame(wire);
    if (ledger_) ledger_->received(f, wire.size());
    return {ExchangeStatus::kOk, std::move(f), {}};
}

void LoopbackTransport::send(const Frame& f) {
    if (!online_) return;
    auto wire = encode_frame(f);
    if (ledger_) ledger_->sent(f, wire.size());
    handler_(decode_frame(wire));
}

}  // namespace cxr
