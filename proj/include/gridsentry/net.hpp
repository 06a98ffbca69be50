#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "gridsentry/analysis.hpp"
#include "gridsentry/protocol.hpp"

namespace gridsentry {

class TcpStream {
  public:
    TcpStream() = default;
    explicit TcpStream(int fd) : fd_(fd) {}
    TcpStream(TcpStream&& other) noexcept;
    TcpStream& operator=(TcpStream&& other) noexcept;
    TcpStream(const TcpStream&) = delete;
    TcpStream& operator=(const TcpStream&) = delete;
    ~TcpStream();

    static TcpStream connect(const std::string& host, uint16_t port);
    bool valid() const { return fd_ >= 0; }
    void send_all(const std::string& data);
    // Appends whatever is available to `buffer`; false on orderly shutdown.
    bool recv_some(std::string& buffer);
    void close();

  private:
    int fd_ = -1;
};

class TcpListener {
  public:
    TcpListener() = default;
    TcpListener(TcpListener&& other) noexcept;
    TcpListener& operator=(TcpListener&& other) noexcept;
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;
    ~TcpListener();

    // Port 0 binds an ephemeral port; read it back with port().
    static TcpListener bind(const std::string& host, uint16_t port);
    uint16_t port() const { return port_; }
    // Waits up to timeout_ms (-1 blocks) for a connection.
    std::optional<TcpStream> accept(int timeout_ms);
    void close();

  private:
    int fd_ = -1;
    uint16_t port_ = 0;
};

// Message framing over one TCP stream.
class StreamTransport : public MessageTransport {
  public:
    explicit StreamTransport(TcpStream stream) : stream_(std::move(stream)) {}
    void send(const Message& msg) override;
    Message receive() override;
    TcpStream& stream() { return stream_; }

  private:
    TcpStream stream_;
    std::string buffer_;
};

struct Endpoint {
    std::string host = "127.0.0.1";
    uint16_t port = 7047;
};

// "host:port"; either side may be omitted ("host", ":port").
Endpoint parse_endpoint(const std::string& text, uint16_t fallback_port);

struct ClientOptions {
    SeverityConfig config;
    int max_retries = 5;   // connection attempts per outage
    int backoff_ms = 200;  // doubled after every failed attempt
    bool exit_on_disconnect = false;
};

// Power-flow client loop: connect, serve requests, reconnect on loss.
// Returns normally only when exit_on_disconnect is set and the server has
// gone away; exhausting the retry budget throws.
void run_client(const Endpoint& endpoint, const ClientOptions& options);

struct ServerOptions {
    AnalysisOptions analysis;
    bool once = false;  // exit after the first completed analysis
    int accept_timeout_ms = -1;
};

// Analysis server loop: accepts a single power-flow client (extra
// connections are turned away), ships it the case, evaluates severities
// over the wire, and prints the finished report to stdout. Reconnects
// re-send the case and restart the interrupted analysis.
void run_server(TcpListener& listener, const CyberPhysicalModel& model,
                const ServerOptions& options);

}  // namespace gridsentry
