#pragma once

#include <memory>
#include <thread>

#include "thermoviz/client.hpp"
#include "thermoviz/server.hpp"

namespace harness {

inline thermoviz::SensorSet default_sensors() {
  return thermoviz::default_sensor_layout(thermoviz::Room{}, {0.0, 1.0, 2.0});
}

/// A viewpoint `distance_cm` from the room center along +x.
inline Eigen::Vector3d at_distance(const thermoviz::FieldEngine& engine, double distance_cm) {
  return engine.target_cm() + Eigen::Vector3d(distance_cm, 0, 0);
}

/// serve_session on a thread, talking to the returned client end.
class LoopbackSession {
 public:
  LoopbackSession(const thermoviz::FieldEngine& engine, thermoviz::SessionOptions options) : options_(options) {
    auto [server, client] = thermoviz::loopback_pair();
    server_ = std::move(server);
    client_ = std::move(client);
    thread_ = std::jthread([this, &engine](std::stop_token stop) {
      thermoviz::serve_session(engine, *server_, options_, stop, &status_);
      finished_ = true;
    });
  }
  ~LoopbackSession() { shutdown(); }

  void shutdown() {
    if (!thread_.joinable()) return;
    thread_.request_stop();
    server_->close();
    thread_.join();
  }

  /// Raw client end; hand it to a Client with take() or drive it directly.
  thermoviz::FrameChannel& raw() { return *client_; }
  std::unique_ptr<thermoviz::FrameChannel> take() { return std::move(client_); }
  const thermoviz::SessionStatus& status() const { return status_; }
  bool finished() const { return finished_; }
  void join() { thread_.join(); }

 private:
  thermoviz::SessionOptions options_;
  std::unique_ptr<thermoviz::FrameChannel> server_;
  std::unique_ptr<thermoviz::FrameChannel> client_;
  thermoviz::SessionStatus status_;
  std::atomic<bool> finished_{false};
  std::jthread thread_;
};

/// Receives one whole cycle from a raw channel, acknowledging every frame.
inline std::vector<thermoviz::wire::RawFrame> raw_cycle(thermoviz::FrameChannel& ch) {
  using namespace thermoviz::wire;
  std::vector<RawFrame> frames;
  for (int i = 0; i < 4; ++i) {
    auto f = ch.receive();
    if (!f) throw std::runtime_error("channel closed mid-cycle");
    ch.send(encode(Ack{f->type, 0}));
    frames.push_back(std::move(*f));
  }
  return frames;
}

}  // namespace harness
