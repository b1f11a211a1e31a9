#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "demo/collective.hpp"

namespace demo {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

// Owning wrapper around a POSIX socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

 private:
  int fd_ = -1;
};

// Listening socket; port 0 asks the kernel for an ephemeral port.
class TcpListener {
 public:
  TcpListener(const std::string& host, std::uint16_t port);

  std::uint16_t port() const { return port_; }
  int fd() const { return socket_.fd(); }

 private:
  Socket socket_;
  std::uint16_t port_ = 0;
};

// Full-mesh all-gather over persistent TCP connections. Rank r dials every
// lower rank and accepts from every higher one; each connection opens with
// the dialer's rank. Messages are framed as a u32 little-endian length
// followed by the frame bytes.
class TcpCollective final : public Collective {
 public:
  TcpCollective(int rank, std::vector<Endpoint> peers, TcpListener listener,
                std::chrono::milliseconds timeout = std::chrono::seconds(30));

  // Bytes written to / read from sockets, including length prefixes.
  std::uint64_t wire_bytes_sent() const { return wire_sent_; }
  std::uint64_t wire_bytes_received() const { return wire_received_; }

 protected:
  std::vector<std::vector<std::uint8_t>> exchange(std::span<const std::uint8_t> frame) override;

 private:
  void connect_mesh(const std::vector<Endpoint>& peers, const TcpListener& listener);

  std::chrono::milliseconds timeout_;
  std::vector<Socket> links_;  // indexed by peer rank; own slot empty
  std::uint64_t wire_sent_ = 0;
  std::uint64_t wire_received_ = 0;
};

}  // namespace demo
