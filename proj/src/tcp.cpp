// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/tcp.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include "cxr/error.hpp"
#include "cxr/server.hpp"

namespace cxr {

namespace {

using Clock = std::chrono::steady_clock;

// Reads exactly n bytes or gives up at the deadline. Returns false on
// timeout/EOF/error with the reason in `why`.
bool read_exact(int fd, std::uint8_t* out, std::size_t n, Clock::time_point deadline, std::string& why) {
    std::size_t got = 0;
    while (got < n) {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
        if (left <= 0) {
            why = "timeout";
            return false;
        }
        pollfd p{fd, POLLIN, 0};
        int pr = ::poll(&p, 1, static_cast<int>(left));
        if (pr < 0 && errno == EINTR) continue;
        if (pr <= 0) {
            why = pr == 0 ? "timeout" : std::strerror(errno);
            return false;
        }
        auto r = ::recv(fd, out + got, n - got, 0);
        if (r == 0) {
            why = "connection closed";
            return false;
        }
        if (r < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            why = std::strerror(errno);
            return false;
        }
        got += static_cast<std::size_t>(r);
    }
    return true;
}

bool send_all(int fd, const Bytes& b) {
    std::size_t sent = 0;
    while (sent < b.size()) {
        auto r = ::send(fd, b.data() + sent, b.size() - sent, MSG_NOSIGNAL);
        if (r < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        sent += static_cast<std::size_t>(r);
    }
    return true;
}

}  // namespace

TcpServer::TcpServer(ServerCore& core, std::uint16_t port, std::string bind_address)
    : core_(core), port_(port), bind_(std::move(bind_address)) {}

TcpServer::~TcpServer() { stop(); }

void TcpServer::start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    require(listen_fd_ >= 0, ErrorCode::kIo, std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port_);
    require(::inet_pton(AF_INET, bind_.c_str(), &addr.sin_addr) == 1, ErrorCode::kInvalidArgument,
            "bad bind address " + bind_);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
        std::string why = std::strerror(errno);
        ::close(listen_fd_);
        listen_fd_ = -1;
        fail(ErrorCode::kIo, "cannot listen on " + bind_ + ":" + std::to_string(port_) + ": " + why);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
}

void TcpServer::stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (acceptor_.joinable()) acceptor_.join();
    std::lock_guard lock(conn_mu_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    for (auto& t : connections_)
        if (t.joinable()) t.join();
    connections_.clear();
    conn_fds_.clear();
}

void TcpServer::accept_loop() {
    while (running_) {
        pollfd p{listen_fd_, POLLIN, 0};
        if (::poll(&p, 1, 200) <= 0) continue;
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        std::lock_guard lock(conn_mu_);
        conn_fds_.push_back(fd);
        connections_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

void TcpServer::serve_connection(int fd) {
    std::string why;
    while (running_) {
        Bytes buf(kFrameHeaderSize);
        // Idle connections are held open; the timeout only bounds a
        // half-received frame.
        pollfd p{fd, POLLIN, 0};
        int pr = ::poll(&p, 1, 500);
        if (pr == 0) continue;
        if (pr < 0 && errno == EINTR) continue;
        if (pr < 0) break;
        auto deadline = Clock::now() + std::chrono::seconds(30);
        if (!read_exact(fd, buf.data(), buf.size(), deadline, why)) break;
        std::size_t total;
        try {
            total = frame_length(buf);
        } catch (const Error& e) {
            send_all(fd, encode_frame(make_frame(ErrorMsg{Reason::kBadLength, e.what()})));
            break;
        }
        buf.resize(total);
        if (!read_exact(fd, buf.data() + kFrameHeaderSize, total - kFrameHeaderSize, deadline, why)) break;
        bool ok = true;
        for (const auto& r : core_.handle_bytes(buf))
            if (!(ok = send_all(fd, encode_frame(r)))) break;
        if (!ok) break;
    }
    ::close(fd);
}

TcpTransport::TcpTransport(std::string host, std::uint16_t port, BandwidthLedger* ledger)
    : host_(std::move(host)), port_(port), ledger_(ledger) {}

TcpTransport::~TcpTransport() { reset(); }

void TcpTransport::reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

bool TcpTransport::ensure_connected(double timeout_s, std::string& why) {
    if (fd_ >= 0) return true;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host_.c_str(), std::to_string(port_).c_str(), &hints, &res) != 0 || !res) {
        why = "cannot resolve " + host_;
        return false;
    }
    int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK);
    int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0 && errno != EINPROGRESS) {
        why = std::strerror(errno);
        ::close(fd);
        return false;
    }
    if (rc != 0) {
        pollfd p{fd, POLLOUT, 0};
        int err = 0;
        socklen_t len = sizeof err;
        if (::poll(&p, 1, static_cast<int>(timeout_s * 1000)) <= 0 ||
            ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) != 0 || err != 0) {
            why = err ? std::strerror(err) : "connect timeout";
            ::close(fd);
            return false;
        }
    }
    ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) & ~O_NONBLOCK);
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    fd_ = fd;
    return true;
}

bool TcpTransport::write_all(const Bytes& b, std::string& why) {
    if (send_all(fd_, b)) return true;
    why = std::strerror(errno);
    reset();
    return false;
}

Exchange TcpTransport::read_frame(double timeout_s) {
    if (fd_ < 0) return {ExchangeStatus::kDisconnected, {}, "not connected"};
    auto deadline = Clock::now() + std::chrono::milliseconds(static_cast<long>(timeout_s * 1000));
    std::string why;
    Bytes buf(kFrameHeaderSize);
    if (!read_exact(fd_, buf.data(), buf.size(), deadline, why)) {
        reset();
        return {why == "timeout" ? ExchangeStatus::kTimeout : ExchangeStatus::kDisconnected, {}, why};
    }
    try {
        buf.resize(frame_length(buf));
        if (!read_exact(fd_, buf.data() + kFrameHeaderSize, buf.size() - kFrameHeaderSize, deadline, why)) {
            reset();
            return {why == "timeout" ? ExchangeStatus::kTimeout : ExchangeStatus::kDisconnected, {}, why};
        }
        auto f = decode_frame(buf);
        if (ledger_) ledger_->received(f, buf.size());
        return {ExchangeStatus::kOk, std::move(f), {}};
    } catch (const Error& e) {
        reset();
        return {ExchangeStatus::kDisconnected, {}, e.what()};
    }
}

Exchange TcpTransport::request(const Frame& req, double timeout_s) {
    std::string why;
    if (!ensure_connected(timeout_s, why)) return {ExchangeStatus::kDisconnected, {}, why};
    auto wire = encode_frame(req);
    if (ledger_) ledger_->sent(req, wire.size());
    if (!write_all(wire, why)) return {ExchangeStatus::kDisconnected, {}, why};
    return read_frame(timeout_s);
}

Exchange TcpTransport::next(double timeout_s) { return read_frame(timeout_s); }

void TcpTransport::send(const Frame& f) {
    std::string why;
    if (fd_ < 0) return;
    auto wire = encode_frame(f);
    if (ledger_) ledger_->sent(f, wire.size());
    write_all(wire, why);
}

}  // namespace cxr
