#include "osplit/channel.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>

#include "osplit/errors.hpp"

namespace osplit {

FrameInfo Endpoint::send(const WireMessage& m) {
  std::vector<std::uint8_t> bytes = encode(m);
  tx_bytes_ += bytes.size();
  FrameInfo info = frame_info(bytes);
  send_frame(bytes);
  return info;
}

WireMessage Endpoint::recv(FrameInfo* info) {
  std::vector<std::uint8_t> bytes = recv_frame();
  rx_bytes_ += bytes.size();
  if (info) *info = frame_info(bytes);
  return decode(bytes);
}

// ----------------------------------------------------------------- inproc ----

namespace {

struct InprocShared {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::vector<std::uint8_t>> q[2];  // q[i] holds frames headed to side i
  bool open[2] = {true, true};
};

class InprocEndpoint : public Endpoint {
 public:
  InprocEndpoint(std::shared_ptr<InprocShared> sh, int side) : sh_(std::move(sh)), side_(side) {}
  ~InprocEndpoint() override {
    std::lock_guard<std::mutex> lk(sh_->mu);
    sh_->open[side_] = false;
    sh_->cv.notify_all();
  }

 protected:
  void send_frame(const std::vector<std::uint8_t>& bytes) override {
    std::lock_guard<std::mutex> lk(sh_->mu);
    if (!sh_->open[1 - side_]) throw Disconnected("inproc: peer endpoint closed");
    sh_->q[1 - side_].push_back(bytes);
    sh_->cv.notify_all();
  }

  std::vector<std::uint8_t> recv_frame() override {
    std::unique_lock<std::mutex> lk(sh_->mu);
    bool ok = sh_->cv.wait_for(lk, std::chrono::milliseconds(timeout_ms_), [&] {
      return !sh_->q[side_].empty() || !sh_->open[1 - side_];
    });
    if (!sh_->q[side_].empty()) {
      std::vector<std::uint8_t> b = std::move(sh_->q[side_].front());
      sh_->q[side_].pop_front();
      return b;
    }
    if (!sh_->open[1 - side_]) throw Disconnected("inproc: peer endpoint closed");
    if (!ok) throw TimedOut("inproc: recv timed out");
    throw TimedOut("inproc: recv timed out");
  }

 private:
  std::shared_ptr<InprocShared> sh_;
  int side_;
};

}  // namespace

std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> make_inproc_pair() {
  auto sh = std::make_shared<InprocShared>();
  return {std::make_unique<InprocEndpoint>(sh, 0), std::make_unique<InprocEndpoint>(sh, 1)};
}

// -------------------------------------------------------------------- tcp ----

namespace {

void wait_readable(int fd, int timeout_ms) {
  pollfd p{fd, POLLIN, 0};
  int r = ::poll(&p, 1, timeout_ms);
  if (r == 0) throw TimedOut("tcp: recv timed out");
  if (r < 0) throw TransportError("tcp: poll failed");
}

class TcpEndpoint : public Endpoint {
 public:
  explicit TcpEndpoint(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  ~TcpEndpoint() override {
    if (fd_ >= 0) ::close(fd_);
  }

 protected:
  void send_frame(const std::vector<std::uint8_t>& bytes) override {
    std::size_t off = 0;
    while (off < bytes.size()) {
      ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
      if (n < 0) throw Disconnected("tcp: send failed (peer gone?)");
      off += static_cast<std::size_t>(n);
    }
  }

  std::vector<std::uint8_t> recv_frame() override {
    std::vector<std::uint8_t> head(25);
    read_exact(head.data(), head.size());
    std::size_t total = frame_size(head.data());
    std::vector<std::uint8_t> frame(total);
    std::memcpy(frame.data(), head.data(), head.size());
    read_exact(frame.data() + head.size(), total - head.size());
    return frame;
  }

 private:
  void read_exact(std::uint8_t* dst, std::size_t n) {
    std::size_t off = 0;
    while (off < n) {
      wait_readable(fd_, timeout_ms_);
      ssize_t r = ::recv(fd_, dst + off, n - off, 0);
      if (r == 0) throw Disconnected("tcp: peer closed connection");
      if (r < 0) throw TransportError("tcp: recv failed");
      off += static_cast<std::size_t>(r);
    }
  }

  int fd_ = -1;
};

sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw TransportError("tcp: bad IPv4 address: " + host);
  return addr;
}

}  // namespace

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError("tcp: socket() failed");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = make_addr(host, port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    ::close(fd_);
    throw TransportError("tcp: bind failed on " + host + ":" + std::to_string(port));
  }
  if (::listen(fd_, 4) < 0) {
    ::close(fd_);
    throw TransportError("tcp: listen failed");
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Endpoint> TcpListener::accept(int timeout_ms) {
  wait_readable(fd_, timeout_ms);
  int cfd = ::accept(fd_, nullptr, nullptr);
  if (cfd < 0) throw TransportError("tcp: accept failed");
  return std::make_unique<TcpEndpoint>(cfd);
}

std::unique_ptr<Endpoint> tcp_connect(const std::string& host, std::uint16_t port,
                                      int timeout_ms) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError("tcp: socket() failed");
  sockaddr_in addr = make_addr(host, port);
  // Bounded retry: the listener may come up slightly after us.
  int waited = 0;
  for (;;) {
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) break;
    ::close(fd);
    if (waited >= timeout_ms)
      throw TransportError("tcp: connect timed out to " + host + ":" + std::to_string(port));
    ::usleep(50 * 1000);
    waited += 50;
    fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError("tcp: socket() failed");
  }
  return std::make_unique<TcpEndpoint>(fd);
}

}  // namespace osplit
