// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <mutex>
#include <string>
#include <thread>

#include "cxr/ledger.hpp"
#include "cxr/transport.hpp"

namespace cxr {

class ServerCore;

// Framed protocol over TCP, one thread per connection.
class TcpServer {
public:
    TcpServer(ServerCore& core, std::uint16_t port, std::string bind_address = "127.0.0.1");
    ~TcpServer();

    TcpServer(const TcpServer&) = delete;
    TcpServer& operator=(const TcpServer&) = delete;

    // Binds and starts accepting; port 0 picks a free port.
    void start();
    void stop();
    std::uint16_t port() const { return port_; }

private:
    void accept_loop();
    void serve_connection(int fd);

    ServerCore& core_;
    std::uint16_t port_;
    std::string bind_;
    int listen_fd_ = -1;
    std::atomic<bool> running_{false};
    std::thread acceptor_;
    std::mutex conn_mu_;
    std::list<std::thread> connections_;
    std::list<int> conn_fds_;
};

// Client side; connects lazily and reconnects after any failure.
class TcpTransport : public Transport {
public:
    TcpTransport(std::string host, std::uint16_t port, BandwidthLedger* ledger = nullptr);
    ~TcpTransport() override;

    Exchange request(const Frame& req, double timeout_s) override;
    Exchange next(double timeout_s) override;
    void send(const Frame& f) override;
    void reset() override;

private:
    bool ensure_connected(double timeout_s, std::string& why);
    bool write_all(const Bytes& b, std::string& why);
    Exchange read_frame(double timeout_s);

    std::string host_;
    std::uint16_t port_;
    BandwidthLedger* ledger_;
    int fd_ = -1;
};

}  // namespace cxr
