// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "cxr/ledger.hpp"
#include "cxr/protocol.hpp"

namespace cxr {

enum class ExchangeStatus { kOk, kTimeout, kDisconnected };

struct Exchange {
    ExchangeStatus status = ExchangeStatus::kOk;
    Frame frame;
    std::string detail;

    bool ok() const { return status == ExchangeStatus::kOk; }
};

// One client connection. A request may be answered by several frames (a
// model stream); the first comes back from request(), the rest from next().
class Transport {
public:
    virtual ~Transport() = default;

    virtual Exchange request(const Frame& req, double timeout_s) = 0;
    virtual Exchange next(double timeout_s) = 0;
    // Fire-and-forget, used for chunk acks.
    virtual void send(const Frame& f) = 0;
    // Drops whatever is still in flight.
    virtual void reset() = 0;
};

using FrameHandler = std::function<std::vector<Frame>(const Frame&)>;

// In-process transport straight into a handler, with a switch to play
// disconnected. Frames go through the codec so byte counts are real.
class LoopbackTransport : public Transport {
public:
    explicit LoopbackTransport(FrameHandler handler, BandwidthLedger* ledger = nullptr)
        : handler_(std::move(handler)), ledger_(ledger) {}

    void set_online(bool online) { online_ = online; }
    bool online() const { return online_; }
    // Lets a test cut a stream after this many more frames.
    void drop_after(std::size_t frames) { drop_after_ = frames; }

    Exchange request(const Frame& req, double timeout_s) override;
    Exchange next(double timeout_s) override;
    void send(const Frame& f) override;
    void reset() override { pending_.clear(); }

private:
    FrameHandler handler_;
    BandwidthLedger* ledger_;
    bool online_ = true;
    std::size_t drop_after_ = static_cast<std::size_t>(-1);
    std::deque<Frame> pending_;
};

}  // namespace cxr
