#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <condition_variable>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "thermoviz/protocol.hpp"

namespace thermoviz {

/// Malformed bytes on the wire: framing cannot continue.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConnectionRefused : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A bidirectional stream of protocol frames. send() takes one encoded frame;
/// receive() blocks for the next whole frame and returns nullopt once the peer
/// has gone. close() may be called from another thread to unblock both.
class FrameChannel {
 public:
  virtual ~FrameChannel() = default;
  virtual bool send(std::span<const std::uint8_t> frame) = 0;
  virtual std::optional<wire::RawFrame> receive() = 0;
  virtual void close() = 0;
  virtual std::string peer() const = 0;
};

/// In-process channel pair for tests and embedding. Each send() delivers
/// exactly the given bytes, which the other side reassembles into frames.
std::pair<std::unique_ptr<FrameChannel>, std::unique_ptr<FrameChannel>> loopback_pair();

/// Plain TCP client connection. Throws ConnectionRefused when nobody listens.
std::unique_ptr<FrameChannel> connect_tcp(const std::string& host, std::uint16_t port);

/// "host:port" -> pair; throws std::invalid_argument on bad input.
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint);

}  // namespace thermoviz
