#pragma once

#include <memory>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/websocket.hpp>

#include "thermoviz/channel.hpp"

namespace thermoviz::net {

using tcp = boost::asio::ip::tcp;
using WebSocket = boost::beast::websocket::stream<tcp::socket>;

std::unique_ptr<FrameChannel> tcp_channel(tcp::socket socket);

/// Wraps an accepted websocket; every binary message carries exactly one frame.
std::unique_ptr<FrameChannel> websocket_channel(WebSocket ws);

}  // namespace thermoviz::net
