#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "osplit/wire.hpp"

namespace osplit {

// A bidirectional frame carrier.  Both implementations move the exact encoded
// frame bytes, so traces recorded over either carrier are identical.
class Endpoint {
 public:
  virtual ~Endpoint() = default;

  FrameInfo send(const WireMessage& m);
  WireMessage recv(FrameInfo* info = nullptr);

  std::uint64_t tx_bytes() const { return tx_bytes_; }
  std::uint64_t rx_bytes() const { return rx_bytes_; }
  void set_timeout_ms(int ms) { timeout_ms_ = ms; }

 protected:
  virtual void send_frame(const std::vector<std::uint8_t>& bytes) = 0;
  virtual std::vector<std::uint8_t> recv_frame() = 0;

  int timeout_ms_ = 30000;
  std::uint64_t tx_bytes_ = 0, rx_bytes_ = 0;
};

// Two connected in-process endpoints backed by byte-vector queues.
std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> make_inproc_pair();

// TCP loopback/remote carrier.  A listener owns the bound socket; port 0
// binds an ephemeral port (readable afterwards, for tests).
class TcpListener {
 public:
  TcpListener(const std::string& host, std::uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<Endpoint> accept(int timeout_ms = 30000);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

std::unique_ptr<Endpoint> tcp_connect(const std::string& host, std::uint16_t port,
                                      int timeout_ms = 30000);

}  // namespace osplit
