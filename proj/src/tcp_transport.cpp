#include "csl/tcp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "csl/dataset_io.hpp"

namespace csl {

namespace {

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            close();
            fd_ = o.fd_;
            o.fd_ = -1;
        }
        return *this;
    }
    ~Socket() { close(); }

    int fd() const { return fd_; }
    void close() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

void send_all(int fd, std::string_view bytes) {
    while (!bytes.empty()) {
        const ssize_t sent = ::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL);
        if (sent < 0) {
            if (errno == EINTR) continue;
            throw Error(std::string("send failed: ") + std::strerror(errno));
        }
        bytes.remove_prefix(static_cast<std::size_t>(sent));
    }
}

// False on orderly shutdown before the first byte.
bool recv_exact(int fd, char* out, std::size_t count) {
    std::size_t got = 0;
    while (got < count) {
        const ssize_t r = ::recv(fd, out + got, count - got, 0);
        if (r < 0) {
            if (errno == EINTR) continue;
            throw Error(std::string("recv failed: ") + std::strerror(errno));
        }
        if (r == 0) {
            if (got == 0) return false;
            throw Error("connection closed mid-frame");
        }
        got += static_cast<std::size_t>(r);
    }
    return true;
}

std::optional<wire::Frame> read_frame(int fd) {
    unsigned char header[wire::kHeaderSize];
    if (!recv_exact(fd, reinterpret_cast<char*>(header), sizeof(header))) return std::nullopt;
    const auto h = wire::decode_header(header);
    wire::Frame frame{h.opcode, std::string(h.length, '\0')};
    if (h.length > 0 && !recv_exact(fd, frame.payload.data(), h.length)) throw Error("connection closed mid-frame");
    return frame;
}

void write_frame(int fd, const wire::Frame& frame) { send_all(fd, wire::encode_frame(frame)); }

Socket connect_to(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos) throw DomainError("address '" + address + "' is not host:port");
    const std::string host = address.substr(0, colon);
    const std::string port = address.substr(colon + 1);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
        throw Error("cannot resolve " + address + ": " + ::gai_strerror(rc));
    }
    Socket sock;
    for (addrinfo* p = res; p != nullptr; p = p->ai_next) {
        Socket s(::socket(p->ai_family, p->ai_socktype, p->ai_protocol));
        if (s.fd() < 0) continue;
        if (::connect(s.fd(), p->ai_addr, p->ai_addrlen) == 0) {
            sock = std::move(s);
            break;
        }
    }
    ::freeaddrinfo(res);
    if (sock.fd() < 0) throw Error("cannot connect to " + address);
    int one = 1;
    ::setsockopt(sock.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return sock;
}

class TcpBackend final : public WorkerBackend {
public:
    TcpBackend(std::shared_ptr<const std::vector<DataShard>> shards, LossModel model,
               const std::vector<std::string>& addresses)
        : shards_(std::move(shards)), model_(model) {
        for (std::size_t r = 0; r < addresses.size(); ++r) {
            const std::size_t worker = r + 2;
            try {
                Socket s = connect_to(addresses[r]);
                write_frame(s.fd(), {static_cast<std::uint8_t>(wire::Opcode::LoadShard),
                                     dataset_to_csv((*shards_)[r + 1])});
                remotes_.push_back(std::move(s));
            } catch (const std::exception& e) {
                throw RoundError(worker, e.what());
            }
        }
    }

    ~TcpBackend() override {
        for (auto& s : remotes_) {
            if (s.fd() < 0) continue;
            try {
                write_frame(s.fd(), {static_cast<std::uint8_t>(wire::Opcode::Shutdown), {}});
            } catch (...) {
            }
        }
    }

    TransportKind kind() const override { return TransportKind::Tcp; }

    std::vector<Vector> gradients(const Vector& theta) override {
        return exchange({static_cast<std::uint8_t>(wire::Opcode::EvalGrad), wire::encode_reals(theta)},
                        wire::Opcode::GradReply,
                        [&] { return loss_gradient(model_, theta, (*shards_)[0]); });
    }

    std::vector<Vector> local_minimizers(const SolverSettings& settings) override {
        // Only the tolerance travels; remote workers use default settings otherwise.
        SolverSettings remote_view;
        remote_view.grad_tol = settings.grad_tol;
        return exchange({static_cast<std::uint8_t>(wire::Opcode::LocalMinReq), wire::encode_real(settings.grad_tol)},
                        wire::Opcode::LocalMinReply,
                        [&] { return local_minimizer(model_, (*shards_)[0], remote_view); });
    }

private:
    std::vector<Vector> exchange(const wire::Frame& request, wire::Opcode reply_op,
                                 const std::function<Vector()>& local) {
        const auto d = (*shards_)[0].d();
        for (std::size_t r = 0; r < remotes_.size(); ++r) {
            try {
                if (remotes_[r].fd() < 0) throw Error("connection previously closed");
                write_frame(remotes_[r].fd(), request);
            } catch (const std::exception& e) {
                remotes_[r].close();
                throw RoundError(r + 2, e.what());
            }
        }
        std::vector<Vector> out(remotes_.size() + 1);
        std::exception_ptr local_error;
        try {
            out[0] = local();
        } catch (const std::exception& e) {
            local_error = std::make_exception_ptr(RoundError(1, e.what()));
        }
        std::exception_ptr first_remote_error;
        // Drain every reply so the streams stay in sync even if one worker failed.
        for (std::size_t r = 0; r < remotes_.size(); ++r) {
            try {
                auto frame = read_frame(remotes_[r].fd());
                if (!frame) throw Error("connection closed");
                if (frame->is(wire::Opcode::Error)) {
                    remotes_[r].close();
                    throw Error("remote error: " + frame->payload);
                }
                if (!frame->is(reply_op)) throw Error("unexpected reply opcode " + std::to_string(frame->opcode));
                out[r + 1] = wire::decode_reals(frame->payload, d);
            } catch (const std::exception& e) {
                if (!first_remote_error) first_remote_error = std::make_exception_ptr(RoundError(r + 2, e.what()));
            }
        }
        if (local_error) std::rethrow_exception(local_error);
        if (first_remote_error) std::rethrow_exception(first_remote_error);
        return out;
    }

    std::shared_ptr<const std::vector<DataShard>> shards_;
    LossModel model_;
    std::vector<Socket> remotes_;
};

}  // namespace

wire::Frame WorkerSession::fail(const std::string& message) {
    closed_ = true;
    return {static_cast<std::uint8_t>(wire::Opcode::Error), message};
}

std::optional<wire::Frame> WorkerSession::handle(const wire::Frame& request) {
    if (closed_) return fail("session closed");
    try {
        switch (request.opcode) {
        case static_cast<std::uint8_t>(wire::Opcode::LoadShard):
            shard_.emplace(parse_dataset_csv(request.payload));
            return std::nullopt;
        case static_cast<std::uint8_t>(wire::Opcode::EvalGrad): {
            if (!shard_) return fail("EVAL_GRAD before LOAD_SHARD");
            const Vector theta = wire::decode_reals(request.payload, shard_->d());
            return wire::Frame{static_cast<std::uint8_t>(wire::Opcode::GradReply),
                               wire::encode_reals(loss_gradient(model_, theta, *shard_))};
        }
        case static_cast<std::uint8_t>(wire::Opcode::LocalMinReq): {
            if (!shard_) return fail("LOCAL_MIN_REQ before LOAD_SHARD");
            SolverSettings settings;
            settings.grad_tol = wire::decode_real(request.payload);
            return wire::Frame{static_cast<std::uint8_t>(wire::Opcode::LocalMinReply),
                               wire::encode_reals(local_minimizer(model_, *shard_, settings))};
        }
        case static_cast<std::uint8_t>(wire::Opcode::Shutdown):
            closed_ = true;
            return std::nullopt;
        default:
            return fail("unknown opcode " + std::to_string(request.opcode));
        }
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

WorkerServer::WorkerServer(LossModel model, std::uint16_t port, const std::string& host) : model_(model) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw Error(std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        throw DomainError("worker: bad bind address " + host);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(listen_fd_, 4) != 0) {
        const std::string msg = std::strerror(errno);
        ::close(listen_fd_);
        throw Error("worker: cannot listen on " + host + ":" + std::to_string(port) + ": " + msg);
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

WorkerServer::~WorkerServer() {
    if (listen_fd_ >= 0) ::close(listen_fd_);
}

void WorkerServer::serve() {
    for (;;) {
        Socket conn(::accept(listen_fd_, nullptr, nullptr));
        if (conn.fd() < 0) {
            if (errno == EINTR) continue;
            throw Error(std::string("worker: accept failed: ") + std::strerror(errno));
        }
        int one = 1;
        ::setsockopt(conn.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        WorkerSession session(model_);
        try {
            while (!session.closed()) {
                auto frame = read_frame(conn.fd());
                if (!frame) break;
                const bool shutdown = frame->is(wire::Opcode::Shutdown);
                if (auto reply = session.handle(*frame)) write_frame(conn.fd(), *reply);
                if (shutdown) return;
            }
        } catch (const std::exception&) {
            // Broken connection: wait for the next coordinator.
        }
    }
}

std::unique_ptr<WorkerBackend> make_tcp_backend(std::shared_ptr<const std::vector<DataShard>> shards, LossModel model,
                                                const std::vector<std::string>& addresses) {
    return std::make_unique<TcpBackend>(std::move(shards), model, addresses);
}

}  // namespace csl
