#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include "rcomm/transport.hpp"

namespace rcomm {

namespace {

void write_all(int fd, const void* buf, std::size_t len) {
  const char* p = static_cast<const char*>(buf);
  while (len > 0) {
    ssize_t n = ::send(fd, p, len, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("tcp send failed: ") + std::strerror(errno));
    }
    p += n;
    len -= static_cast<std::size_t>(n);
  }
}

// Returns false on orderly shutdown at a frame boundary.
bool read_all(int fd, void* buf, std::size_t len) {
  char* p = static_cast<char*>(buf);
  std::size_t got = 0;
  while (got < len) {
    ssize_t n = ::recv(fd, p + got, len - got, 0);
    if (n == 0) {
      if (got == 0) return false;
      throw Error("tcp peer closed mid-frame");
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      if (got == 0 && (errno == ECONNRESET || errno == EBADF)) return false;
      throw Error(std::string("tcp recv failed: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

void put_u32(std::uint8_t* p, std::uint32_t v) {
  p[0] = static_cast<std::uint8_t>(v);
  p[1] = static_cast<std::uint8_t>(v >> 8);
  p[2] = static_cast<std::uint8_t>(v >> 16);
  p[3] = static_cast<std::uint8_t>(v >> 24);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::pair<std::string, std::uint16_t> split_address(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos)
    throw Error("address must be host:port, got '" + addr + "'");
  return {addr.substr(0, colon),
          static_cast<std::uint16_t>(std::stoi(addr.substr(colon + 1)))};
}

int connect_with_retry(const std::string& host, std::uint16_t port) {
  for (int attempt = 0; attempt < 600; ++attempt) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw Error("socket() failed");
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    if (::inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(),
                    &sa.sin_addr) != 1) {
      ::close(fd);
      throw Error("cannot resolve host '" + host + "'");
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) == 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return fd;
    }
    ::close(fd);
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  throw Error("tcp connect timed out: " + host + ":" + std::to_string(port));
}

}  // namespace

TcpEndpoint::TcpEndpoint(int rank, std::vector<std::string> addresses,
                         std::vector<int> node_of)
    : rank_(rank), addresses_(std::move(addresses)), node_of_(std::move(node_of)) {
  const int n = static_cast<int>(addresses_.size());
  if (rank_ < 0 || rank_ >= n) throw Error("tcp: rank out of range");
  if (node_of_.empty()) node_of_.assign(n, 0);
  socket_of_rank_.assign(n, -1);
  for (int r = 0; r < n; ++r) write_mu_.push_back(std::make_unique<std::mutex>());

  auto [host, port] = split_address(addresses_[rank_]);
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error("socket() failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(port);
  sa.sin_addr.s_addr = htonl(INADDR_ANY);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0)
    throw Error("tcp bind failed on " + addresses_[rank_] + ": " +
                std::strerror(errno));
  if (::listen(listen_fd_, n) != 0) throw Error("tcp listen failed");

  // Lower ranks connect to higher ranks; each connection opens with a
  // 4-byte hello carrying the connecting rank.
  std::thread acceptor([&] {
    for (int i = 0; i < rank_; ++i) {
      int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) throw Error("tcp accept failed");
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      std::uint8_t hello[4];
      if (!read_all(fd, hello, 4)) throw Error("tcp hello missing");
      int peer = static_cast<int>(get_u32(hello));
      socket_of_rank_[peer] = fd;
    }
  });
  for (int r = rank_ + 1; r < n; ++r) {
    auto [h, p] = split_address(addresses_[r]);
    int fd = connect_with_retry(h, p);
    std::uint8_t hello[4];
    put_u32(hello, static_cast<std::uint32_t>(rank_));
    write_all(fd, hello, 4);
    socket_of_rank_[r] = fd;
  }
  acceptor.join();

  for (int r = 0; r < n; ++r)
    if (r != rank_)
      readers_.emplace_back([this, fd = socket_of_rank_[r]] { reader_loop(fd); });
}

TcpEndpoint::~TcpEndpoint() {
  close();
  for (auto& t : readers_)
    if (t.joinable()) t.join();
}

void TcpEndpoint::close() {
  {
    std::lock_guard<std::mutex> lk(mu_);
    if (closed_) return;
    closed_ = true;
  }
  cv_.notify_all();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  for (int fd : socket_of_rank_)
    if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
}

void TcpEndpoint::reader_loop(int fd) {
  for (;;) {
    std::uint8_t header[16];
    bool ok;
    try {
      ok = read_all(fd, header, 16);
    } catch (const Error&) {
      ok = false;
    }
    if (!ok) return;
    int src = static_cast<int>(get_u32(header));
    std::uint32_t tag = get_u32(header + 8);
    std::uint32_t len = get_u32(header + 12);
    Bytes payload(len);
    if (len && !read_all(fd, payload.data(), len)) return;
    {
      std::lock_guard<std::mutex> lk(mu_);
      inbox_[{src, tag}].push_back(std::move(payload));
    }
    cv_.notify_all();
  }
}

double TcpEndpoint::send(double now, int dst, std::uint32_t tag,
                         std::span<const std::uint8_t> payload) {
  const int n = world_size();
  if (dst < 0 || dst >= n) throw Error("send: unknown destination rank");
  {
    std::lock_guard<std::mutex> lk(mu_);
    if (closed_) throw Error("send on closed endpoint");
  }
  if (dst == rank_) throw Error("tcp: self-send not supported");
  std::uint8_t header[16];
  put_u32(header, static_cast<std::uint32_t>(rank_));
  put_u32(header + 4, static_cast<std::uint32_t>(dst));
  put_u32(header + 8, tag);
  put_u32(header + 12, static_cast<std::uint32_t>(payload.size()));
  {
    std::lock_guard<std::mutex> lk(*write_mu_[dst]);
    write_all(socket_of_rank_[dst], header, 16);
    if (!payload.empty())
      write_all(socket_of_rank_[dst], payload.data(), payload.size());
  }
  bytes_sent_ += payload.size();
  ++messages_sent_;
  return now;
}

std::pair<double, Bytes> TcpEndpoint::recv(double now, int src,
                                           std::uint32_t tag) {
  if (src < 0 || src >= world_size()) throw Error("recv: unknown source rank");
  std::unique_lock<std::mutex> lk(mu_);
  auto key = std::make_pair(src, tag);
  cv_.wait(lk, [&] {
    if (closed_) return true;
    auto it = inbox_.find(key);
    return it != inbox_.end() && !it->second.empty();
  });
  if (closed_) throw Error("recv on closed endpoint");
  auto& q = inbox_[key];
  Bytes payload = std::move(q.front());
  q.pop_front();
  return {now, std::move(payload)};
}

}  // namespace rcomm
