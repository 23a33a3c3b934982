#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "thermoviz/channel.hpp"
#include "thermoviz/config.hpp"
#include "thermoviz/engine.hpp"
#include "thermoviz/session.hpp"

namespace thermoviz {

struct SessionOptions {
  wire::Mode mode = wire::Mode::Full;
  double epsilon_v = 0.01;
  bool diffusion = false;
  /// Starting viewpoint in centimeters; nullopt puts the camera at the far
  /// corner of the room (one room diagonal from the center).
  std::optional<Eigen::Vector3d> viewpoint;
};

/// Live view of one session for status reporting.
struct SessionStatus {
  std::atomic<int> band{0};
  std::atomic<std::uint64_t> tick{0};
  std::atomic<std::uint64_t> cycles{0};
  std::atomic<std::uint64_t> violations{0};
};

/// Runs the five-step exchange over `channel` until the peer disconnects, a
/// frame cannot be decoded, or `stop` fires. Each cycle serves the newest
/// snapshot (older ones are skipped) at the session's band.
void serve_session(const FieldEngine& engine, FrameChannel& channel, const SessionOptions& options,
                   std::stop_token stop, SessionStatus* status = nullptr);

/// The running service: tick loop, TCP listener and websocket/HTTP listener.
class Server {
 public:
  explicit Server(ServerConfig config);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Starts the tick loop and listeners. Bound ports are available afterwards.
  void start();
  void stop();

  std::uint16_t tcp_port() const { return tcp_port_; }
  std::uint16_t ws_port() const { return ws_port_; }
  const ServerConfig& config() const { return config_; }
  FieldEngine& engine() { return *engine_; }
  std::size_t client_count() const;
  /// Number of connected clients per band.
  std::vector<std::size_t> band_counts() const;

  /// Serves an already-connected channel on a new session thread.
  void attach(std::unique_ptr<FrameChannel> channel);

 private:
  struct Listener;
  struct Session {
    SessionStatus status;
    std::mutex mu;
    std::function<void()> closer;  // unblocks the session's I/O; cleared on exit
    std::atomic<bool> done{false};
    std::jthread thread;  // last: joined before the rest is destroyed

    void close();
  };

  void tick_loop(std::stop_token stop);
  void reap();

  ServerConfig config_;
  std::unique_ptr<FieldEngine> engine_;
  std::unique_ptr<ReadingSource> source_;
  SessionOptions session_options_;

  std::unique_ptr<Listener> listener_;
  std::uint16_t tcp_port_ = 0;
  std::uint16_t ws_port_ = 0;
  std::jthread ticker_;

  mutable std::mutex sessions_mu_;
  std::list<std::unique_ptr<Session>> sessions_;
  bool stopped_ = false;
};

}  // namespace thermoviz
