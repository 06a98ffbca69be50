#include "gridsentry/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <iostream>
#include <thread>

#include "gridsentry/analysis.hpp"
#include "gridsentry/errors.hpp"
#include "gridsentry/util.hpp"

namespace gridsentry {

namespace {

[[noreturn]] void fail_errno(const std::string& what) {
    throw ProtocolError(what + ": " + std::strerror(errno));
}

sockaddr_in make_addr(const std::string& host, uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (host.empty() || host == "*") {
        addr.sin_addr.s_addr = htonl(INADDR_ANY);
        return addr;
    }
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    int rc = getaddrinfo(host.c_str(), nullptr, &hints, &res);
    if (rc != 0 || !res)
        throw ProtocolError("cannot resolve host '" + host + "': " + gai_strerror(rc));
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
    return addr;
}

}  // namespace

TcpStream::TcpStream(TcpStream&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

TcpStream& TcpStream::operator=(TcpStream&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

TcpStream::~TcpStream() { close(); }

void TcpStream::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

TcpStream TcpStream::connect(const std::string& host, uint16_t port) {
    sockaddr_in addr = make_addr(host, port);
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) fail_errno("socket");
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        int saved = errno;
        ::close(fd);
        errno = saved;
        fail_errno("connect to " + host + ":" + std::to_string(port));
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return TcpStream(fd);
}

void TcpStream::send_all(const std::string& data) {
    if (fd_ < 0) throw ProtocolError("send on a closed stream");
    size_t sent = 0;
    while (sent < data.size()) {
        ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            fail_errno("send");
        }
        sent += static_cast<size_t>(n);
    }
}

bool TcpStream::recv_some(std::string& buffer) {
    if (fd_ < 0) throw ProtocolError("receive on a closed stream");
    char chunk[65536];
    while (true) {
        ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
        if (n < 0) {
            if (errno == EINTR) continue;
            fail_errno("recv");
        }
        if (n == 0) return false;
        buffer.append(chunk, static_cast<size_t>(n));
        return true;
    }
}

TcpListener::TcpListener(TcpListener&& other) noexcept : fd_(other.fd_), port_(other.port_) {
    other.fd_ = -1;
}

TcpListener& TcpListener::operator=(TcpListener&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        port_ = other.port_;
        other.fd_ = -1;
    }
    return *this;
}

TcpListener::~TcpListener() { close(); }

void TcpListener::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

TcpListener TcpListener::bind(const std::string& host, uint16_t port) {
    sockaddr_in addr = make_addr(host, port);
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) fail_errno("socket");
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        int saved = errno;
        ::close(fd);
        errno = saved;
        fail_errno("bind to port " + std::to_string(port));
    }
    if (::listen(fd, 8) != 0) {
        int saved = errno;
        ::close(fd);
        errno = saved;
        fail_errno("listen");
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    if (::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len) != 0) {
        int saved = errno;
        ::close(fd);
        errno = saved;
        fail_errno("getsockname");
    }
    TcpListener l;
    l.fd_ = fd;
    l.port_ = ntohs(bound.sin_port);
    return l;
}

std::optional<TcpStream> TcpListener::accept(int timeout_ms) {
    if (fd_ < 0) throw ProtocolError("accept on a closed listener");
    pollfd pfd{fd_, POLLIN, 0};
    int rc = ::poll(&pfd, 1, timeout_ms);
    if (rc < 0) fail_errno("poll");
    if (rc == 0) return std::nullopt;
    int client = ::accept(fd_, nullptr, nullptr);
    if (client < 0) fail_errno("accept");
    int one = 1;
    ::setsockopt(client, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return TcpStream(client);
}

void StreamTransport::send(const Message& msg) { stream_.send_all(encode(msg)); }

Message StreamTransport::receive() {
    while (true) {
        size_t consumed = 0;
        auto msg = try_decode(buffer_, consumed);
        if (msg) {
            buffer_.erase(0, consumed);
            return *msg;
        }
        if (!stream_.recv_some(buffer_))
            throw ProtocolError("connection closed by peer");
    }
}

Endpoint parse_endpoint(const std::string& text, uint16_t fallback_port) {
    Endpoint ep;
    ep.port = fallback_port;
    if (text.empty()) return ep;
    size_t colon = text.rfind(':');
    std::string host = colon == std::string::npos ? text : text.substr(0, colon);
    if (!host.empty()) ep.host = host;
    if (colon != std::string::npos && colon + 1 < text.size()) {
        long p = 0;
        try {
            p = parse_long(text.substr(colon + 1));
        } catch (const std::invalid_argument&) {
            throw ProtocolError("bad endpoint port in '" + text + "'");
        }
        if (p < 1 || p > 65535) throw ProtocolError("endpoint port out of range in '" + text + "'");
        ep.port = static_cast<uint16_t>(p);
    }
    return ep;
}

void run_client(const Endpoint& endpoint, const ClientOptions& options) {
    ClientSession session(options.config);
    bool served_once = false;
    int attempts = 0;
    int backoff = options.backoff_ms;
    while (true) {
        TcpStream stream;
        try {
            stream = TcpStream::connect(endpoint.host, endpoint.port);
        } catch (const ProtocolError& e) {
            ++attempts;
            if (attempts >= options.max_retries)
                throw ProtocolError("giving up after " + std::to_string(attempts) +
                                    " connection attempts: " + e.what());
            std::cerr << "gridsentry: " << e.what() << ", retrying in " << backoff << " ms\n";
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff *= 2;
            continue;
        }
        attempts = 0;
        backoff = options.backoff_ms;
        StreamTransport transport(std::move(stream));
        try {
            while (true) {
                Message request = transport.receive();
                auto reply = session.handle(request);
                if (reply) transport.send(*reply);
                served_once = true;
            }
        } catch (const ProtocolError& e) {
            if (options.exit_on_disconnect && served_once) return;
            std::cerr << "gridsentry: connection lost (" << e.what() << "), reconnecting\n";
        }
    }
}

namespace {

// Refuses queued extra connections: the protocol is single-client.
void refuse_pending(TcpListener& listener) {
    while (auto extra = listener.accept(0)) extra->close();
}

class RefusingTransport : public MessageTransport {
  public:
    RefusingTransport(StreamTransport& inner, TcpListener& listener)
        : inner_(inner), listener_(listener) {}
    void send(const Message& msg) override {
        refuse_pending(listener_);
        inner_.send(msg);
    }
    Message receive() override {
        Message m = inner_.receive();
        refuse_pending(listener_);
        return m;
    }

  private:
    StreamTransport& inner_;
    TcpListener& listener_;
};

}  // namespace

void run_server(TcpListener& listener, const CyberPhysicalModel& model,
                const ServerOptions& options) {
    while (true) {
        auto stream = listener.accept(options.accept_timeout_ms);
        if (!stream) throw ProtocolError("timed out waiting for a power-flow client");
        StreamTransport transport(std::move(*stream));
        RefusingTransport guarded(transport, listener);
        try {
            guarded.send(make_send_case(model.case_text));
            RemoteSeverityEvaluator evaluator(guarded, model.relay_branches(),
                                              options.analysis.divergence_penalty);
            AnalysisResult result = run_analysis(model, 0, options.analysis, evaluator);
            std::cout << format_report(model, result) << std::flush;
            if (options.once) return;
            // Hold the session open; re-run only if the client reconnects.
            std::string sink;
            while (transport.stream().recv_some(sink)) sink.clear();
            std::cerr << "gridsentry: client disconnected, awaiting reconnect\n";
        } catch (const ProtocolError& e) {
            std::cerr << "gridsentry: analysis interrupted (" << e.what()
                      << "), awaiting reconnect\n";
        }
    }
}

}  // namespace gridsentry
