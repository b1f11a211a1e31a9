#include "demo/tcp_collective.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <thread>
#include <unistd.h>

namespace demo {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint32_t kMaxFrameBytes = 1u << 30;

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res); rc != 0 || res == nullptr) {
    throw TransportError("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof(addr));
  ::freeaddrinfo(res);
  addr.sin_port = htons(port);
  return addr;
}

int remaining_ms(Clock::time_point deadline) {
  const auto left =
      std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left > 0 ? static_cast<int>(left) : 0;
}

void set_nonblocking(int fd) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  if (flags < 0 || ::fcntl(fd, F_SETFL, flags | O_NONBLOCK) < 0) {
    throw TransportError(errno_text("fcntl"));
  }
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

// Blocking-with-deadline helpers used only during connection setup.
void write_exact(int fd, const void* data, std::size_t n, Clock::time_point deadline) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  while (n > 0) {
    pollfd pfd{fd, POLLOUT, 0};
    if (::poll(&pfd, 1, remaining_ms(deadline)) <= 0) throw Timeout("handshake write timed out");
    const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EAGAIN || errno == EINTR) continue;
      throw PeerDisconnected(errno_text("send"));
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
}

void read_exact(int fd, void* data, std::size_t n, Clock::time_point deadline) {
  auto* p = static_cast<std::uint8_t*>(data);
  while (n > 0) {
    pollfd pfd{fd, POLLIN, 0};
    if (::poll(&pfd, 1, remaining_ms(deadline)) <= 0) throw Timeout("handshake read timed out");
    const ssize_t r = ::recv(fd, p, n, 0);
    if (r == 0) throw PeerDisconnected("peer closed during handshake");
    if (r < 0) {
      if (errno == EAGAIN || errno == EINTR) continue;
      throw PeerDisconnected(errno_text("recv"));
    }
    p += r;
    n -= static_cast<std::size_t>(r);
  }
}

Socket dial(const Endpoint& ep, Clock::time_point deadline) {
  const sockaddr_in addr = resolve(ep.host, ep.port);
  while (true) {
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid()) throw TransportError(errno_text("socket"));
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) == 0) return s;
    if (Clock::now() >= deadline) {
      throw Timeout("could not connect to " + ep.host + ":" + std::to_string(ep.port));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

}  // namespace

Socket::~Socket() {
  if (fd_ >= 0) ::close(fd_);
}

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port)
    : socket_(::socket(AF_INET, SOCK_STREAM, 0)) {
  if (!socket_.valid()) throw TransportError(errno_text("socket"));
  int one = 1;
  ::setsockopt(socket_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = resolve(host, port);
  if (::bind(socket_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw TransportError(errno_text(("bind " + host + ":" + std::to_string(port)).c_str()));
  }
  if (::listen(socket_.fd(), 64) != 0) throw TransportError(errno_text("listen"));
  socklen_t len = sizeof(addr);
  if (::getsockname(socket_.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    throw TransportError(errno_text("getsockname"));
  }
  port_ = ntohs(addr.sin_port);
}

TcpCollective::TcpCollective(int rank, std::vector<Endpoint> peers, TcpListener listener,
                             std::chrono::milliseconds timeout)
    : Collective(rank, static_cast<int>(peers.size())), timeout_(timeout) {
  connect_mesh(peers, listener);
}

void TcpCollective::connect_mesh(const std::vector<Endpoint>& peers, const TcpListener& listener) {
  const int me = rank();
  const int world = world_size();
  links_.resize(static_cast<std::size_t>(world));
  const auto deadline = Clock::now() + timeout_;

  for (int peer = 0; peer < me; ++peer) {
    Socket s = dial(peers[peer], deadline);
    const std::uint32_t hello = static_cast<std::uint32_t>(me);
    write_exact(s.fd(), &hello, sizeof(hello), deadline);
    links_[peer] = std::move(s);
  }

  for (int pending = world - 1 - me; pending > 0; --pending) {
    pollfd pfd{listener.fd(), POLLIN, 0};
    if (::poll(&pfd, 1, remaining_ms(deadline)) <= 0) {
      throw Timeout("rank " + std::to_string(me) + " timed out waiting for higher ranks");
    }
    Socket s(::accept(listener.fd(), nullptr, nullptr));
    if (!s.valid()) throw TransportError(errno_text("accept"));
    std::uint32_t hello = 0;
    read_exact(s.fd(), &hello, sizeof(hello), deadline);
    if (hello <= static_cast<std::uint32_t>(me) || hello >= static_cast<std::uint32_t>(world) ||
        links_[hello].valid()) {
      throw TransportError("unexpected hello from rank " + std::to_string(hello));
    }
    links_[hello] = std::move(s);
  }

  for (auto& s : links_) {
    if (!s.valid()) continue;
    set_nonblocking(s.fd());
    set_nodelay(s.fd());
  }
}

std::vector<std::vector<std::uint8_t>> TcpCollective::exchange(
    std::span<const std::uint8_t> frame) {
  const int world = world_size();
  const int me = rank();
  if (frame.size() > kMaxFrameBytes) throw TransportError("frame too large");

  std::vector<std::uint8_t> out(4 + frame.size());
  const std::uint32_t len = static_cast<std::uint32_t>(frame.size());
  std::memcpy(out.data(), &len, 4);
  std::memcpy(out.data() + 4, frame.data(), frame.size());

  struct Inbound {
    std::uint8_t header[4] = {};
    std::size_t header_got = 0;
    std::vector<std::uint8_t> body;
    std::size_t body_got = 0;
    bool done = false;
  };
  std::vector<std::size_t> sent(static_cast<std::size_t>(world), 0);
  std::vector<Inbound> in(static_cast<std::size_t>(world));
  std::vector<std::vector<std::uint8_t>> frames(static_cast<std::size_t>(world));
  frames[me].assign(frame.begin(), frame.end());

  int outstanding = 2 * (world - 1);
  const auto deadline = Clock::now() + timeout_;
  std::vector<pollfd> fds;
  std::vector<int> owner;
  while (outstanding > 0) {
    fds.clear();
    owner.clear();
    for (int p = 0; p < world; ++p) {
      if (p == me) continue;
      short events = 0;
      if (sent[p] < out.size()) events |= POLLOUT;
      if (!in[p].done) events |= POLLIN;
      if (events) {
        fds.push_back(pollfd{links_[p].fd(), events, 0});
        owner.push_back(p);
      }
    }
    const int ready = ::poll(fds.data(), fds.size(), remaining_ms(deadline));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw TransportError(errno_text("poll"));
    }
    if (ready == 0) {
      throw Timeout("all-gather timed out on rank " + std::to_string(me) + " after " +
                    std::to_string(timeout_.count()) + " ms");
    }

    for (std::size_t i = 0; i < fds.size(); ++i) {
      const int p = owner[i];
      const int fd = fds[i].fd;
      const short rev = fds[i].revents;

      if ((rev & POLLOUT) && sent[p] < out.size()) {
        const ssize_t w = ::send(fd, out.data() + sent[p], out.size() - sent[p], MSG_NOSIGNAL);
        if (w < 0 && errno != EAGAIN && errno != EINTR) {
          throw PeerDisconnected("rank " + std::to_string(p) + ": " + errno_text("send"));
        }
        if (w > 0) {
          sent[p] += static_cast<std::size_t>(w);
          wire_sent_ += static_cast<std::uint64_t>(w);
          if (sent[p] == out.size()) --outstanding;
        }
      }

      if ((rev & (POLLIN | POLLHUP | POLLERR)) && !in[p].done) {
        Inbound& ib = in[p];
        // Read at most up to the end of this frame; anything after belongs
        // to the peer's next step.
        std::uint8_t* dst;
        std::size_t want;
        if (ib.header_got < 4) {
          dst = ib.header + ib.header_got;
          want = 4 - ib.header_got;
        } else {
          dst = ib.body.data() + ib.body_got;
          want = ib.body.size() - ib.body_got;
        }
        const ssize_t r = want > 0 ? ::recv(fd, dst, want, 0) : 0;
        if (want > 0 && r == 0) {
          throw PeerDisconnected("rank " + std::to_string(p) + " closed the connection");
        }
        if (r < 0 && errno != EAGAIN && errno != EINTR) {
          throw PeerDisconnected("rank " + std::to_string(p) + ": " + errno_text("recv"));
        }
        if (r > 0) {
          wire_received_ += static_cast<std::uint64_t>(r);
          if (ib.header_got < 4) {
            ib.header_got += static_cast<std::size_t>(r);
            if (ib.header_got == 4) {
              std::uint32_t n = 0;
              std::memcpy(&n, ib.header, 4);
              if (n > kMaxFrameBytes) throw TransportError("peer announced an oversized frame");
              ib.body.resize(n);
            }
          } else {
            ib.body_got += static_cast<std::size_t>(r);
          }
        }
        if (ib.header_got == 4 && ib.body_got == ib.body.size()) {
          ib.done = true;
          frames[p] = std::move(ib.body);
          --outstanding;
        }
      }
    }
  }
  return frames;
}

}  // namespace demo
