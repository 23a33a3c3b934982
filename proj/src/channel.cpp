#include "thermoviz/channel.hpp"

#include <charconv>

#include <boost/asio/connect.hpp>
#include <boost/asio/io_context.hpp>
#include <boost/asio/write.hpp>
#include <boost/beast/core/flat_buffer.hpp>

#include "net.hpp"

namespace thermoviz {
namespace {

[[noreturn]] void framing_failed(wire::DecodeStatus status) {
  throw ProtocolError("undecodable frame: " + std::string(wire::to_string(status)));
}

struct Pipe {
  std::mutex mu;
  std::condition_variable cv;
  std::vector<std::uint8_t> bytes;
  bool closed = false;
};

class LoopbackChannel : public FrameChannel {
 public:
  LoopbackChannel(std::shared_ptr<Pipe> in, std::shared_ptr<Pipe> out, std::string name)
      : in_(std::move(in)), out_(std::move(out)), name_(std::move(name)) {}
  ~LoopbackChannel() override { close(); }

  bool send(std::span<const std::uint8_t> frame) override {
    {
      std::lock_guard lock(out_->mu);
      if (out_->closed) return false;
      out_->bytes.insert(out_->bytes.end(), frame.begin(), frame.end());
    }
    out_->cv.notify_all();
    return true;
  }

  std::optional<wire::RawFrame> receive() override {
    std::unique_lock lock(in_->mu);
    for (;;) {
      auto decoded = wire::decode_frame(in_->bytes);
      if (decoded.status == wire::DecodeStatus::Ok) {
        in_->bytes.erase(in_->bytes.begin(), in_->bytes.begin() + static_cast<std::ptrdiff_t>(decoded.consumed));
        return std::move(decoded.frame);
      }
      if (decoded.status != wire::DecodeStatus::NeedMoreBytes) framing_failed(decoded.status);
      if (in_->closed) return std::nullopt;
      in_->cv.wait(lock);
    }
  }

  void close() override {
    for (const auto& pipe : {in_, out_}) {
      {
        std::lock_guard lock(pipe->mu);
        pipe->closed = true;
      }
      pipe->cv.notify_all();
    }
  }

  std::string peer() const override { return name_; }

 private:
  std::shared_ptr<Pipe> in_;
  std::shared_ptr<Pipe> out_;
  std::string name_;
};

class TcpChannel : public FrameChannel {
 public:
  // `io` is set when the channel owns the context its socket runs on.
  explicit TcpChannel(net::tcp::socket socket, std::unique_ptr<boost::asio::io_context> io = nullptr)
      : io_(std::move(io)), socket_(std::move(socket)) {
    boost::system::error_code ec;
    const auto ep = socket_.remote_endpoint(ec);
    peer_ = ec ? "tcp:?" : "tcp:" + ep.address().to_string() + ":" + std::to_string(ep.port());
    socket_.set_option(net::tcp::no_delay(true), ec);
  }
  ~TcpChannel() override { close(); }

  bool send(std::span<const std::uint8_t> frame) override {
    boost::system::error_code ec;
    boost::asio::write(socket_, boost::asio::buffer(frame.data(), frame.size()), ec);
    return !ec;
  }

  std::optional<wire::RawFrame> receive() override {
    std::array<std::uint8_t, 64 * 1024> chunk{};
    for (;;) {
      auto decoded = wire::decode_frame(std::span(pending_).subspan(start_));
      if (decoded.status == wire::DecodeStatus::Ok) {
        start_ += decoded.consumed;
        if (start_ == pending_.size()) {
          pending_.clear();
          start_ = 0;
        }
        return std::move(decoded.frame);
      }
      if (decoded.status != wire::DecodeStatus::NeedMoreBytes) framing_failed(decoded.status);
      boost::system::error_code ec;
      const std::size_t n = socket_.read_some(boost::asio::buffer(chunk), ec);
      if (ec) return std::nullopt;
      if (start_ > 0) {
        pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(start_));
        start_ = 0;
      }
      pending_.insert(pending_.end(), chunk.begin(), chunk.begin() + static_cast<std::ptrdiff_t>(n));
    }
  }

  void close() override {
    boost::system::error_code ec;
    socket_.shutdown(net::tcp::socket::shutdown_both, ec);
  }

  std::string peer() const override { return peer_; }

 private:
  std::unique_ptr<boost::asio::io_context> io_;
  net::tcp::socket socket_;
  std::vector<std::uint8_t> pending_;
  std::size_t start_ = 0;
  std::string peer_;
};

class WebSocketChannel : public FrameChannel {
 public:
  explicit WebSocketChannel(net::WebSocket ws) : ws_(std::move(ws)) {
    ws_.binary(true);
    boost::system::error_code ec;
    const auto ep = ws_.next_layer().remote_endpoint(ec);
    peer_ = ec ? "ws:?" : "ws:" + ep.address().to_string() + ":" + std::to_string(ep.port());
  }
  ~WebSocketChannel() override { close(); }

  bool send(std::span<const std::uint8_t> frame) override {
    boost::system::error_code ec;
    ws_.write(boost::asio::buffer(frame.data(), frame.size()), ec);
    return !ec;
  }

  std::optional<wire::RawFrame> receive() override {
    boost::beast::flat_buffer buffer;
    boost::system::error_code ec;
    ws_.read(buffer, ec);
    if (ec) return std::nullopt;
    const auto data = buffer.cdata();
    const std::span bytes(static_cast<const std::uint8_t*>(data.data()), data.size());
    auto decoded = wire::decode_frame(bytes);
    if (decoded.status == wire::DecodeStatus::NeedMoreBytes) framing_failed(wire::DecodeStatus::ShortPayload);
    if (decoded.status != wire::DecodeStatus::Ok) framing_failed(decoded.status);
    if (decoded.consumed != bytes.size()) framing_failed(wire::DecodeStatus::TrailingBytes);
    return std::move(decoded.frame);
  }

  void close() override {
    boost::system::error_code ec;
    ws_.next_layer().shutdown(net::tcp::socket::shutdown_both, ec);
  }

  std::string peer() const override { return peer_; }

 private:
  net::WebSocket ws_;
  std::string peer_;
};

}  // namespace

std::pair<std::unique_ptr<FrameChannel>, std::unique_ptr<FrameChannel>> loopback_pair() {
  auto a = std::make_shared<Pipe>();
  auto b = std::make_shared<Pipe>();
  return {std::make_unique<LoopbackChannel>(a, b, "loopback:server"),
          std::make_unique<LoopbackChannel>(b, a, "loopback:client")};
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon == 0) throw std::invalid_argument("expected host:port, got '" + endpoint + "'");
  unsigned port = 0;
  const char* first = endpoint.data() + colon + 1;
  const char* last = endpoint.data() + endpoint.size();
  const auto [ptr, ec] = std::from_chars(first, last, port);
  if (ec != std::errc() || ptr != last || port == 0 || port > 65535) {
    throw std::invalid_argument("bad port in '" + endpoint + "'");
  }
  return {endpoint.substr(0, colon), static_cast<std::uint16_t>(port)};
}

std::unique_ptr<FrameChannel> connect_tcp(const std::string& host, std::uint16_t port) {
  auto io = std::make_unique<boost::asio::io_context>();
  net::tcp::resolver resolver(*io);
  boost::system::error_code ec;
  const auto endpoints = resolver.resolve(host, std::to_string(port), ec);
  if (ec) throw ConnectionRefused("cannot resolve " + host + ": " + ec.message());
  net::tcp::socket socket(*io);
  boost::asio::connect(socket, endpoints, ec);
  if (ec) throw ConnectionRefused("cannot connect to " + host + ":" + std::to_string(port) + ": " + ec.message());
  return std::make_unique<TcpChannel>(std::move(socket), std::move(io));
}

namespace net {

std::unique_ptr<FrameChannel> tcp_channel(tcp::socket socket) { return std::make_unique<TcpChannel>(std::move(socket)); }

std::unique_ptr<FrameChannel> websocket_channel(WebSocket ws) {
  return std::make_unique<WebSocketChannel>(std::move(ws));
}

}  // namespace net
}  // namespace thermoviz
