// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "cxr/client.hpp"

namespace cxr {

// Result of one API call, independent of the HTTP library.
struct ApiReply {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

// The localhost JSON surface over a Client. Handlers are plain functions so
// they can be exercised without sockets.
class ClientApi {
public:
    explicit ClientApi(Client& client) : client_(client) {}

    // Body is a PGM; `query` keys other than "id" become scan metadata.
    ApiReply scan(const std::string& body, const std::map<std::string, std::string>& query);
    // Body: {"id": "...", "confirmed": true|false}.
    ApiReply confirm(const std::string& body);
    ApiReply status();
    ApiReply scans();
    // format=pgm (overlay, default), heatmap (raw map) or json.
    ApiReply heatmap(const std::string& id, const std::string& format);

private:
    Client& client_;
};

// Edge daemon: HTTP API, optional static UI directory and a background sync
// thread talking to the server over TCP.
class ClientDaemon {
public:
    explicit ClientDaemon(ClientConfig cfg);
    // For tests: an existing client and no TCP.
    explicit ClientDaemon(std::unique_ptr<Client> client);
    ~ClientDaemon();

    ClientDaemon(const ClientDaemon&) = delete;
    ClientDaemon& operator=(const ClientDaemon&) = delete;

    // Binds (port 0 picks one) and serves on background threads.
    void start();
    void stop();
    std::uint16_t port() const { return port_; }
    Client& client() { return *client_; }

    // Wakes the sync thread.
    void request_sync();
    std::size_t sync_cycles() const { return cycles_.load(); }

private:
    void sync_loop();

    std::unique_ptr<Client> client_;
    ClientApi api_;
    struct Http;
    std::unique_ptr<Http> http_;
    std::uint16_t port_ = 0;
    std::thread server_thread_;
    std::thread sync_thread_;
    std::mutex mu_;
    std::condition_variable cv_;
    bool stop_ = false;
    bool sync_requested_ = false;
    std::atomic<std::size_t> cycles_{0};
};

}  // namespace cxr
