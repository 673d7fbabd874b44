#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "csl/cluster.hpp"
#include "csl/wire.hpp"

namespace csl {

/// Protocol state machine of one remote worker, independent of sockets.
class WorkerSession {
public:
    explicit WorkerSession(LossModel model) : model_(model) {}

    /// Reply to send back (if any). After an ERROR reply or SHUTDOWN the
    /// session is closed and the connection must be dropped.
    std::optional<wire::Frame> handle(const wire::Frame& request);
    bool closed() const { return closed_; }
    bool loaded() const { return shard_.has_value(); }

private:
    wire::Frame fail(const std::string& message);

    LossModel model_;
    std::optional<DataShard> shard_;
    bool closed_ = false;
};

/// Blocking TCP server hosting one worker. Serves one coordinator
/// connection at a time until a SHUTDOWN frame arrives.
class WorkerServer {
public:
    /// Binds to `host:port`; port 0 picks an ephemeral port.
    WorkerServer(LossModel model, std::uint16_t port = 0, const std::string& host = "127.0.0.1");
    ~WorkerServer();
    WorkerServer(const WorkerServer&) = delete;
    WorkerServer& operator=(const WorkerServer&) = delete;

    std::uint16_t port() const { return port_; }
    /// Returns after SHUTDOWN. A connection that closes without SHUTDOWN
    /// (or after an ERROR frame) is dropped and the next one accepted.
    void serve();

private:
    LossModel model_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
};

/// Client side of the protocol for workers 2..k.
std::unique_ptr<WorkerBackend> make_tcp_backend(std::shared_ptr<const std::vector<DataShard>> shards, LossModel model,
                                                const std::vector<std::string>& addresses);

}  // namespace csl
