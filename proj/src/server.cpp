#include "thermoviz/server.hpp"

#include <fstream>
#include <sstream>

#include <boost/asio/io_context.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "net.hpp"

namespace thermoviz {
namespace {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
using wire::SessionAction;

std::string_view content_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".wasm") return "application/wasm";
  return "application/octet-stream";
}

// What one cycle puts on the wire, prepared before the HEADER goes out so the
// whole cycle reflects a single snapshot.
struct CyclePlan {
  wire::Header header;
  std::vector<std::uint8_t> sensors_owned;
  std::vector<std::uint8_t> particles_owned;
  std::span<const std::uint8_t> sensors;
  std::span<const std::uint8_t> particles;
  std::vector<std::size_t> sensor_indices;    // delta: sensors sent, by index
  std::vector<std::size_t> particle_indices;  // delta: level entries sent
  std::uint32_t crc = 0;
};

}  // namespace

void serve_session(const FieldEngine& engine, FrameChannel& channel, const SessionOptions& options,
                   std::stop_token stop, SessionStatus* status) {
  const BandConfig& bands = engine.options().bands;
  const wire::BandContext context{&bands, engine.target_cm()};
  const Room& room = engine.grid().room();
  const SensorSet& sensors = engine.sensors();

  wire::SessionState state;
  state.mode = options.mode;
  state.viewpoint = options.viewpoint.value_or(engine.target_cm() + room.extent() * 100.0);
  state.band = select_band(state.viewpoint, context.target, bands);

  std::shared_ptr<const LevelLayout> sent_layout;
  std::vector<float> sent_values;
  std::vector<float> sent_sensors(sensors.size(), std::numeric_limits<float>::quiet_NaN());
  std::uint64_t last_tick = 0;
  bool first = true;

  auto receive = [&]() -> std::optional<wire::Message> {
    const auto frame = channel.receive();
    if (!frame) return std::nullopt;
    wire::Message message;
    const auto st = wire::decode_payload(frame->type, frame->payload, wire::Mode::Full, message);
    if (st != wire::DecodeStatus::Ok) throw ProtocolError("bad client payload: " + std::string(wire::to_string(st)));
    return message;
  };

  try {
    while (!stop.stop_requested()) {
      const SnapshotPtr snap = first ? engine.latest() : engine.wait_newer(last_tick, stop);
      if (!snap) return;
      first = false;
      const LevelPtr level = engine.level(snap, state.band);
      const auto& layout = level->layout;

      auto step = wire::session_step(state, wire::CycleStart{sent_layout == layout}, context);
      state = step.state;

      CyclePlan plan;
      plan.header = {state.cycle_mode,
                     snap->tick,
                     static_cast<std::uint16_t>(sensors.size()),
                     static_cast<std::uint32_t>(level->size()),
                     {static_cast<float>(room.length), static_cast<float>(room.width), static_cast<float>(room.height)},
                     static_cast<std::uint8_t>(state.band)};
      if (state.cycle_mode == wire::Mode::Full) {
        plan.sensors = snap->sensors_full;
        plan.particles = level->particles_full;
      } else {
        wire::SensorsDelta sd;
        for (std::size_t i = 0; i < sensors.size(); ++i) {
          if (needs_send(snap->sensor_values[i], sent_sensors[i], options.epsilon_v)) {
            sd.records.push_back({sensors[i].id, snap->sensor_values[i]});
            plan.sensor_indices.push_back(i);
          }
        }
        std::vector<ValueUpdate> updates;
        if (options.diffusion && layout->schedule) {
          const auto& schedule = *layout->schedule;
          updates = next_wave(schedule, state.cursor % schedule.wave_count(), level->values, sent_values,
                              options.epsilon_v);
        } else {
          updates = wire::delta_payload(sent_values, level->values_f32, options.epsilon_v);
        }
        for (auto& u : updates) {
          plan.particle_indices.push_back(u.id);
          u.id = layout->ids[u.id];
        }
        plan.sensors_owned = wire::encode_payload(sd);
        plan.particles_owned = wire::encode_payload(wire::ParticlesDelta{std::move(updates)});
        plan.sensors = plan.sensors_owned;
        plan.particles = plan.particles_owned;
      }
      plan.crc = wire::crc32(plan.particles, wire::crc32(plan.sensors));

      bool cycle_open = true;
      while (cycle_open) {
        bool await = false;
        for (const auto action : step.actions) {
          switch (action) {
            case SessionAction::SendHeader:
              await = channel.send(wire::encode(plan.header));
              break;
            case SessionAction::SendSensors:
              await = channel.send(wire::encode_frame(wire::FrameType::Sensors, plan.sensors));
              break;
            case SessionAction::SendParticles:
              await = channel.send(wire::encode_frame(wire::FrameType::Particles, plan.particles));
              break;
            case SessionAction::SendFooter:
              await = channel.send(wire::encode(wire::Footer{snap->tick, plan.crc}));
              break;
            case SessionAction::Commit:
              if (plan.header.mode == wire::Mode::Full) {
                sent_layout = layout;
                sent_values = level->values_f32;
                sent_sensors = snap->sensor_values;
              } else {
                for (std::size_t i : plan.sensor_indices) sent_sensors[i] = snap->sensor_values[i];
                for (std::size_t i : plan.particle_indices) sent_values[i] = level->values_f32[i];
                if (options.diffusion) ++state.cursor;
              }
              cycle_open = false;
              break;
            case SessionAction::Reset:
              spdlog::warn("{}: protocol violation ({}); next cycle is full", channel.peer(),
                           step.violation.value_or("?"));
              if (status) ++status->violations;
              cycle_open = false;
              break;
          }
          if (!cycle_open) break;
          if (!await) return;  // peer gone
        }
        if (!cycle_open) break;
        const auto message = receive();
        if (!message) return;
        step = wire::session_step(state, wire::Message{*message}, context);
        state = step.state;
      }

      last_tick = snap->tick;
      if (status) {
        status->band = state.band;
        status->tick = snap->tick;
        ++status->cycles;
      }
    }
  } catch (const ProtocolError& e) {
    spdlog::warn("{}: closing session: {}", channel.peer(), e.what());
  }
}

struct Server::Listener {
  asio::io_context io;
  std::unique_ptr<net::tcp::acceptor> tcp;
  std::unique_ptr<net::tcp::acceptor> ws;
  std::jthread thread;

  // Reads one HTTP request: /stream upgrades to a websocket session, anything
  // else is answered from the static directory.
  static void serve_http(Server& server, net::tcp::socket socket);
  static void respond_static(const std::filesystem::path& root, net::tcp::socket& socket, std::string_view target,
                             unsigned version);
};

Server::Server(ServerConfig config) : config_(std::move(config)) {
  validate(config_);
  engine_ = make_engine(config_);
  for (const auto& w : engine_->warnings()) spdlog::warn("{}", w);
  spdlog::info("preprocessing: particles={} sensors={} tetrahedra={} inside={} took_ms={:.1f}", engine_->grid().size(),
               engine_->sensors().size(), engine_->mesh().tetrahedra.size(), engine_->weights().inside_count(),
               static_cast<double>(engine_->preprocessing_time().count()) / 1000.0);
  source_ = make_source(config_, engine_->sensors());
  session_options_.mode = config_.mode;
  session_options_.epsilon_v = config_.epsilon_v;
  session_options_.diffusion = config_.diffusion;
}

Server::~Server() { stop(); }

void Server::start() {
  listener_ = std::make_unique<Listener>();
  auto& l = *listener_;
  const auto address = asio::ip::make_address(config_.address);

  l.tcp = std::make_unique<net::tcp::acceptor>(l.io, net::tcp::endpoint(address, config_.port));
  tcp_port_ = l.tcp->local_endpoint().port();
  // Accept loops re-arm themselves through a weak reference; the io thread
  // holds the strong ones.
  auto accept_tcp_holder = std::make_shared<std::function<void()>>();
  *accept_tcp_holder = [this, &l, weak = std::weak_ptr<std::function<void()>>(accept_tcp_holder)] {
    l.tcp->async_accept([this, weak](boost::system::error_code ec, net::tcp::socket socket) {
      if (ec) return;
      attach(net::tcp_channel(std::move(socket)));
      if (auto next = weak.lock()) (*next)();
    });
  };
  (*accept_tcp_holder)();

  std::shared_ptr<std::function<void()>> accept_ws_holder;
  if (config_.ws_port >= 0) {
    l.ws = std::make_unique<net::tcp::acceptor>(l.io,
                                                net::tcp::endpoint(address, static_cast<std::uint16_t>(config_.ws_port)));
    ws_port_ = l.ws->local_endpoint().port();
    accept_ws_holder = std::make_shared<std::function<void()>>();
    *accept_ws_holder = [this, &l, weak = std::weak_ptr<std::function<void()>>(accept_ws_holder)] {
      l.ws->async_accept([this, weak](boost::system::error_code ec, net::tcp::socket socket) {
        if (ec) return;
        Listener::serve_http(*this, std::move(socket));
        if (auto next = weak.lock()) (*next)();
      });
    };
    (*accept_ws_holder)();
  }

  l.thread = std::jthread([&l, accept_tcp_holder, accept_ws_holder] { l.io.run(); });
  ticker_ = std::jthread([this](std::stop_token stop) { tick_loop(stop); });
  spdlog::info("listening: tcp={}:{} ws={}", config_.address, tcp_port_,
               config_.ws_port >= 0 ? std::to_string(ws_port_) + "/stream" : std::string("off"));
}

void Server::stop() {
  {
    std::lock_guard lock(sessions_mu_);
    if (stopped_) return;
    stopped_ = true;
  }
  if (ticker_.joinable()) {
    ticker_.request_stop();
    ticker_.join();
  }
  if (listener_) {
    asio::post(listener_->io, [l = listener_.get()] {
      boost::system::error_code ec;
      if (l->tcp) l->tcp->close(ec);
      if (l->ws) l->ws->close(ec);
    });
    listener_->io.stop();
    if (listener_->thread.joinable()) listener_->thread.join();
  }
  std::list<std::unique_ptr<Session>> sessions;
  {
    std::lock_guard lock(sessions_mu_);
    sessions.swap(sessions_);
  }
  for (auto& s : sessions) {
    s->thread.request_stop();
    s->close();
  }
  sessions.clear();  // joins
  listener_.reset();
}

void Server::Session::close() {
  std::lock_guard lock(mu);
  if (closer) closer();
}

void Server::attach(std::unique_ptr<FrameChannel> channel) {
  std::shared_ptr<FrameChannel> owned(std::move(channel));
  // Hold the list lock until the thread is assigned so stop() cannot destroy
  // the session under us.
  std::lock_guard lock(sessions_mu_);
  if (stopped_) return;
  sessions_.push_back(std::make_unique<Session>());
  Session* s = sessions_.back().get();
  s->closer = [ch = owned.get()] { ch->close(); };
  spdlog::info("{}: session opened", owned->peer());
  s->thread = std::jthread([this, s, owned](std::stop_token stop) {
    serve_session(*engine_, *owned, session_options_, stop, &s->status);
    spdlog::info("{}: session closed after {} cycles", owned->peer(), s->status.cycles.load());
    {
      std::lock_guard inner(s->mu);
      s->closer = nullptr;
    }
    owned->close();
    s->done = true;
  });
}

void Server::Listener::serve_http(Server& server, net::tcp::socket socket) {
  auto shared_socket = std::make_shared<net::tcp::socket>(std::move(socket));
  std::lock_guard lock(server.sessions_mu_);
  if (server.stopped_) return;
  server.sessions_.push_back(std::make_unique<Session>());
  Session* s = server.sessions_.back().get();
  s->closer = [shared_socket] {
    boost::system::error_code ec;
    shared_socket->shutdown(net::tcp::socket::shutdown_both, ec);
  };
  s->thread = std::jthread([&server, s, shared_socket](std::stop_token stop) {
    beast::flat_buffer buffer;
    http::request<http::string_body> request;
    boost::system::error_code ec;
    http::read(*shared_socket, buffer, request, ec);
    if (!ec && beast::websocket::is_upgrade(request) && request.target() == "/stream") {
      net::WebSocket ws(std::move(*shared_socket));
      ws.accept(request, ec);
      if (!ec) {
        auto channel = net::websocket_channel(std::move(ws));
        {
          std::lock_guard inner(s->mu);
          s->closer = [ch = channel.get()] { ch->close(); };
        }
        spdlog::info("{}: session opened", channel->peer());
        serve_session(*server.engine_, *channel, server.session_options_, stop, &s->status);
        spdlog::info("{}: session closed after {} cycles", channel->peer(), s->status.cycles.load());
      }
    } else if (!ec) {
      respond_static(server.config_.static_dir, *shared_socket, std::string_view(request.target().data(), request.target().size()), request.version());
    }
    {
      std::lock_guard inner(s->mu);
      s->closer = nullptr;
    }
    s->done = true;
  });
}

void Server::Listener::respond_static(const std::filesystem::path& root, net::tcp::socket& socket,
                                      std::string_view target, unsigned version) {
  std::string path(target.substr(0, target.find('?')));
  if (path.empty() || path == "/") path = "/index.html";
  http::response<http::string_body> res;
  res.version(version);
  res.set(http::field::server, "thermoviz");
  res.keep_alive(false);
  const auto file = root / path.substr(1);
  std::ifstream in;
  if (!root.empty() && path.find("..") == std::string::npos && std::filesystem::is_regular_file(file)) {
    in.open(file, std::ios::binary);
  }
  if (!in.is_open() || !in) {
    res.result(http::status::not_found);
    res.set(http::field::content_type, "text/plain");
    res.body() = "not found\n";
  } else {
    std::ostringstream body;
    body << in.rdbuf();
    res.result(http::status::ok);
    res.set(http::field::content_type, std::string(content_type(file)));
    res.body() = body.str();
  }
  res.prepare_payload();
  boost::system::error_code ec;
  http::write(socket, res, ec);
  socket.shutdown(net::tcp::socket::shutdown_both, ec);
}

void Server::reap() {
  std::list<std::unique_ptr<Session>> finished;
  std::lock_guard lock(sessions_mu_);
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if ((*it)->done) {
      finished.push_back(std::move(*it));
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
}

std::size_t Server::client_count() const {
  std::lock_guard lock(sessions_mu_);
  std::size_t n = 0;
  for (const auto& s : sessions_) n += !s->done && s->status.cycles > 0;
  return n;
}

std::vector<std::size_t> Server::band_counts() const {
  std::vector<std::size_t> counts(config_.bands.count(), 0);
  std::lock_guard lock(sessions_mu_);
  for (const auto& s : sessions_) {
    if (s->done || s->status.cycles == 0) continue;
    const auto b = static_cast<std::size_t>(s->status.band.load());
    if (b < counts.size()) ++counts[b];
  }
  return counts;
}

void Server::tick_loop(std::stop_token stop) {
  while (!stop.stop_requested()) {
    auto batch = source_->next(stop);
    if (!batch) {
      if (stop.stop_requested()) break;
      // Replay exhausted: keep ticking so sessions see a live, steady field.
      if (!sleep_until(std::chrono::steady_clock::now() + config_.tick_period, stop)) break;
      batch = ReadingBatch{};
    }
    const auto snap = engine_->tick(*batch);

    // Build the levels sessions are about to ask for; whoever gets there
    // first pays, and the level records what it cost.
    const auto counts = band_counts();
    std::int64_t encode_us = 0;
    for (std::size_t b = 0; b < counts.size(); ++b) {
      if (counts[b] > 0) encode_us += engine_->level(snap, static_cast<int>(b))->build_time.count();
    }

    if (config_.log_every > 0 && snap->tick % config_.log_every == 0) {
      std::string bands;
      std::size_t clients = 0;
      for (std::size_t b = 0; b < counts.size(); ++b) {
        bands += (b ? "," : "") + std::to_string(counts[b]);
        clients += counts[b];
      }
      spdlog::info("tick={} clients={} band_counts={} encode_us={}", snap->tick, clients, bands, encode_us);
    }
    reap();
  }
}

}  // namespace thermoviz
