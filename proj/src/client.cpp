#include "thermoviz/client.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "csv.hpp"

namespace thermoviz::client {
namespace {

template <typename T>
T decode_as(const wire::RawFrame& frame, wire::Mode mode) {
  wire::Message message;
  const auto status = wire::decode_payload(frame.type, frame.payload, mode, message);
  if (status != wire::DecodeStatus::Ok) {
    throw ProtocolError(std::string(wire::to_string(frame.type)) + " payload: " + std::string(wire::to_string(status)));
  }
  return std::get<T>(message);
}

nlohmann::json command_json(const wire::Command& c) {
  switch (c.code) {
    case wire::CommandCode::SetViewpoint:
      return {{"type", "set_viewpoint"}, {"viewpoint", {c.viewpoint[0], c.viewpoint[1], c.viewpoint[2]}}};
    case wire::CommandCode::SetMode:
      return {{"type", "set_mode"}, {"mode", wire::to_string(c.mode)}};
    case wire::CommandCode::RequestFull:
      return {{"type", "request_full"}};
  }
  return nullptr;
}

}  // namespace

std::optional<std::size_t> Mirror::find(std::uint32_t id) const {
  const auto it = std::lower_bound(particles.begin(), particles.end(), id,
                                   [](const wire::ParticleRecord& r, std::uint32_t v) { return r.id < v; });
  if (it == particles.end() || it->id != id) return std::nullopt;
  return static_cast<std::size_t>(it - particles.begin());
}

std::string to_json_line(const CycleReport& r, double elapsed_ms) {
  nlohmann::json j = {{"cycle", r.cycle},
                      {"tick", r.tick},
                      {"band", r.band},
                      {"mode", wire::to_string(r.mode)},
                      {"points", r.points},
                      {"sensor_records", r.sensor_records},
                      {"particle_records", r.particle_records},
                      {"sensor_bytes", r.sensor_bytes},
                      {"particle_bytes", r.particle_bytes},
                      {"crc_ok", r.crc_ok},
                      {"elapsed_ms", std::round(elapsed_ms * 10.0) / 10.0},
                      {"command", r.command ? command_json(*r.command) : nlohmann::json(nullptr)}};
  return j.dump();
}

Client::Client(std::unique_ptr<FrameChannel> channel) : channel_(std::move(channel)) {}

wire::RawFrame Client::expect(wire::FrameType type) {
  auto frame = channel_->receive();
  if (!frame) throw ConnectionLost("connection lost while waiting for " + std::string(wire::to_string(type)));
  if (frame->type != type) {
    throw ProtocolError("expected " + std::string(wire::to_string(type)) + ", got " +
                        std::string(wire::to_string(frame->type)));
  }
  return std::move(*frame);
}

void Client::ack(wire::FrameType type, std::uint8_t status) {
  if (!channel_->send(wire::encode(wire::Ack{type, status}))) throw ConnectionLost("connection lost while sending ACK");
}

CycleReport Client::run_cycle(const CommandHook& at_footer) {
  const auto header = decode_as<wire::Header>(expect(wire::FrameType::Header), wire::Mode::Full);
  ack(wire::FrameType::Header);
  const auto sensors_frame = expect(wire::FrameType::Sensors);
  ack(wire::FrameType::Sensors);
  const auto particles_frame = expect(wire::FrameType::Particles);
  ack(wire::FrameType::Particles);
  const auto footer = decode_as<wire::Footer>(expect(wire::FrameType::Footer), wire::Mode::Full);

  CycleReport report;
  report.cycle = cycles_;
  report.tick = header.tick;
  report.band = header.band;
  report.mode = header.mode;
  report.points = header.particle_count;
  report.sensor_bytes = sensors_frame.payload.size();
  report.particle_bytes = particles_frame.payload.size();

  const auto crc = wire::crc32(particles_frame.payload, wire::crc32(sensors_frame.payload));
  if (footer.tick != header.tick || footer.crc != crc) {
    ack(wire::FrameType::Footer, 1);
    std::ostringstream msg;
    msg << "tick " << header.tick << ": footer (tick " << footer.tick << ", crc " << std::hex << footer.crc
        << ") does not match payloads (crc " << crc << ")";
    throw ChecksumMismatch(msg.str());
  }

  if (header.mode == wire::Mode::Full) {
    auto s = decode_as<wire::SensorsFull>(sensors_frame, wire::Mode::Full).records;
    auto p = decode_as<wire::ParticlesFull>(particles_frame, wire::Mode::Full).records;
    if (s.size() != header.sensor_count || p.size() != header.particle_count) {
      throw ProtocolError("full cycle carries " + std::to_string(s.size()) + " sensors / " + std::to_string(p.size()) +
                          " particles, header announced " + std::to_string(header.sensor_count) + " / " +
                          std::to_string(header.particle_count));
    }
    std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    std::sort(p.begin(), p.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    mirror_.sensors = std::move(s);
    mirror_.particles = std::move(p);
    mirror_.complete = true;
    report.sensor_records = mirror_.sensors.size();
    report.particle_records = mirror_.particles.size();
  } else {
    if (!mirror_.complete) throw ProtocolError("delta cycle before any full cycle");
    if (header.particle_count != mirror_.particles.size()) {
      throw ProtocolError("delta cycle announces " + std::to_string(header.particle_count) + " particles, mirror has " +
                          std::to_string(mirror_.particles.size()));
    }
    const auto s = decode_as<wire::SensorsDelta>(sensors_frame, wire::Mode::Delta).records;
    const auto p = decode_as<wire::ParticlesDelta>(particles_frame, wire::Mode::Delta).records;
    for (const auto& u : s) {
      const auto it = std::find_if(mirror_.sensors.begin(), mirror_.sensors.end(),
                                   [&](const wire::SensorRecord& r) { return r.id == u.id; });
      if (it == mirror_.sensors.end()) throw ProtocolError("delta for unknown sensor " + std::to_string(u.id));
      it->value = u.value;
    }
    for (const auto& u : p) {
      const auto i = mirror_.find(u.id);
      if (!i) throw ProtocolError("delta for unknown particle " + std::to_string(u.id));
      mirror_.particles[*i].value = u.value;
    }
    report.sensor_records = s.size();
    report.particle_records = p.size();
  }
  mirror_.header = header;
  bands_.push_back(header.band);
  ++cycles_;

  report.command = at_footer ? at_footer() : std::nullopt;
  if (report.command) {
    if (!channel_->send(wire::encode(*report.command))) throw ConnectionLost("connection lost while sending COMMAND");
  } else {
    ack(wire::FrameType::Footer);
  }
  return report;
}

wire::Command set_viewpoint(const Eigen::Vector3d& cm) {
  wire::Command c;
  c.code = wire::CommandCode::SetViewpoint;
  c.viewpoint = {static_cast<float>(cm.x()), static_cast<float>(cm.y()), static_cast<float>(cm.z())};
  return c;
}

wire::Command set_mode(wire::Mode mode) {
  wire::Command c;
  c.code = wire::CommandCode::SetMode;
  c.mode = mode;
  return c;
}

wire::Command request_full() { return wire::Command{wire::CommandCode::RequestFull, {}, wire::Mode::Full}; }

std::vector<ScriptStep> load_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open script " + path.string());
  std::vector<ScriptStep> steps;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = csv::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto fields = csv::split(trimmed);
    const auto t = fields.size() == 4 ? csv::parse_number<double>(fields[0]) : std::nullopt;
    std::optional<double> xyz[3];
    if (t) {
      for (int i = 0; i < 3; ++i) xyz[i] = csv::parse_number<double>(fields[static_cast<std::size_t>(i) + 1]);
    }
    if (!t || !xyz[0] || !xyz[1] || !xyz[2] || *t < 0) {
      if (steps.empty() && line_no == 1) continue;  // header
      throw std::runtime_error(path.string() + " line " + std::to_string(line_no) + ": expected t_ms,x,y,z");
    }
    steps.push_back({std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(*t))),
                     Eigen::Vector3d(*xyz[0], *xyz[1], *xyz[2])});
  }
  std::stable_sort(steps.begin(), steps.end(), [](const auto& a, const auto& b) { return a.at < b.at; });
  return steps;
}

std::vector<CycleReport> run_script(Client& client, const std::vector<ScriptStep>& script, std::ostream& report,
                                    const RunOptions& options) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  std::size_t next = 0;
  std::size_t tail = 0;
  std::vector<CycleReport> reports;

  auto due_command = [&]() -> std::optional<wire::Command> {
    const auto elapsed = clock::now() - start;
    std::size_t due = next;
    while (due < script.size() && script[due].at <= elapsed) ++due;
    if (due == next) return std::nullopt;
    next = due;
    return set_viewpoint(script[due - 1].viewpoint);
  };

  for (;;) {
    if (options.max_cycles && reports.size() >= options.max_cycles) break;
    const bool script_done = next == script.size();
    auto r = client.run_cycle(due_command);
    const double elapsed = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    report << to_json_line(r, elapsed) << '\n' << std::flush;
    reports.push_back(std::move(r));
    // Tail cycles count from the first cycle after the last command, so the
    // band it selects shows up in the report.
    if (script_done && ++tail >= options.tail_cycles) break;
  }
  return reports;
}

void export_csv(const Mirror& mirror, std::ostream& out) {
  out << "x,y,z,value\n";
  char buf[128];
  for (const auto& p : mirror.particles) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g\n", p.position[0], p.position[1], p.position[2], p.value);
    out << buf;
  }
}

void export_ply(const Mirror& mirror, std::ostream& out) {
  out << "ply\nformat ascii 1.0\ncomment tick " << mirror.header.tick << " band " << int(mirror.header.band) << '\n'
      << "element vertex " << mirror.particles.size() << '\n'
      << "property float x\nproperty float y\nproperty float z\nproperty float value\nend_header\n";
  char buf[128];
  for (const auto& p : mirror.particles) {
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g %.9g\n", p.position[0], p.position[1], p.position[2], p.value);
    out << buf;
  }
}

void export_snapshot(const Mirror& mirror, const std::filesystem::path& path, const std::string& format) {
  if (format != "csv" && format != "ply") throw std::invalid_argument("unknown export format '" + format + "'");
  if (!mirror.complete) {
    throw std::runtime_error("mirror is incomplete: run at least one full-mode cycle before exporting");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (format == "csv") {
    export_csv(mirror, out);
  } else {
    export_ply(mirror, out);
  }
}

std::string to_string(CheckResult::Outcome outcome) {
  switch (outcome) {
    case CheckResult::Outcome::Pass:
      return "PASS";
    case CheckResult::Outcome::Fail:
      return "FAIL";
    case CheckResult::Outcome::Skip:
      return "SKIP";
  }
  return "?";
}

bool VerifyReport::passed() const {
  return std::none_of(checks.begin(), checks.end(),
                      [](const CheckResult& c) { return c.outcome == CheckResult::Outcome::Fail; });
}

std::optional<std::string> compare_mirrors(const Mirror& expected, const Mirror& actual, double tolerance) {
  if (expected.particles.size() != actual.particles.size()) {
    return "point count " + std::to_string(actual.particles.size()) + " vs " +
           std::to_string(expected.particles.size());
  }
  for (std::size_t i = 0; i < expected.particles.size(); ++i) {
    const auto& e = expected.particles[i];
    const auto& a = actual.particles[i];
    if (e.id != a.id) return "particle " + std::to_string(e.id) + " missing from mirror";
    const double diff = std::abs(static_cast<double>(e.value) - static_cast<double>(a.value));
    if (!(diff <= tolerance)) {
      std::ostringstream msg;
      msg << "particle " << e.id << ": mirror " << a.value << ", full " << e.value << " (|diff| " << diff << " > "
          << tolerance << ")";
      return msg.str();
    }
  }
  return std::nullopt;
}

VerifyReport verify(Client& client, const VerifyOptions& options) {
  using Outcome = CheckResult::Outcome;
  VerifyReport report;
  CheckResult crc{"crc", Outcome::Pass, ""};
  CheckResult soundness{"delta_soundness", Outcome::Skip, ""};
  CheckResult band{"band_switch", Outcome::Skip, ""};
  std::size_t cycles = 0;

  auto finish = [&] {
    crc.detail = std::to_string(cycles) + " cycles checked";
    report.checks = {crc, soundness, band};
    return report;
  };
  auto cycle = [&](std::optional<wire::Command> command) {
    auto r = client.run_cycle(std::move(command));
    ++cycles;
    return r;
  };

  try {
    // Reach a steady field in delta mode: a run of cycles with nothing to send.
    cycle(set_mode(wire::Mode::Delta));
    std::size_t deltas = 0;
    std::size_t quiet = 0;
    for (std::size_t i = 0; i < options.settle_cycles && quiet < options.quiet_cycles; ++i) {
      const auto r = cycle(std::nullopt);
      if (r.mode == wire::Mode::Delta) {
        ++deltas;
        quiet = (r.sensor_records == 0 && r.particle_records == 0) ? quiet + 1 : 0;
      } else {
        quiet = 0;
      }
    }

    if (deltas == 0) {
      soundness.detail = "server sent no delta cycles";
    } else if (quiet < options.quiet_cycles) {
      soundness.detail = "field still changing after " + std::to_string(options.settle_cycles) +
                         " cycles; needs a quiescent source";
    } else {
      // This cycle's footer carries REQUEST_FULL; the next one is full.
      cycle(request_full());
      Mirror maintained = client.mirror();
      if (options.mutate) {
        const auto i = maintained.find(*options.mutate);
        if (i) maintained.particles[*i].value += static_cast<float>(10.0 * options.epsilon + 1.0);
      }
      const auto r = cycle(std::nullopt);
      if (r.mode != wire::Mode::Full) {
        soundness = {"delta_soundness", Outcome::Fail, "REQUEST_FULL not honored by the next cycle"};
      } else if (const auto diff = compare_mirrors(client.mirror(), maintained, options.epsilon + 1e-6)) {
        soundness = {"delta_soundness", Outcome::Fail, *diff};
      } else {
        soundness = {"delta_soundness", Outcome::Pass,
                     std::to_string(deltas) + " delta cycles, " + std::to_string(client.mirror().particles.size()) +
                         " particles within " + std::to_string(options.epsilon)};
      }
    }

    // Move the camera into a neighboring band along +x from the room center.
    const auto& h = client.mirror().header;
    const Eigen::Vector3d center(h.room[0] * 50.0, h.room[1] * 50.0, h.room[2] * 50.0);
    // Band b spans [thresholds[b-1], thresholds[b]); the last one is open.
    const auto& edges = options.thresholds;
    const int current = h.band;
    const int bands = static_cast<int>(edges.size());
    const int target = current + 1 < bands ? current + 1 : current - 1;
    if (target < 0) {
      band.detail = "only one band configured";
    } else {
      const auto t = static_cast<std::size_t>(target);
      const double lo = t == 0 ? 0.0 : edges[t - 1];
      const double distance = target + 1 < bands ? 0.5 * (lo + edges[t]) : lo + 250.0;
      const Eigen::Vector3d viewpoint = center + Eigen::Vector3d(distance, 0, 0);
      cycle(set_viewpoint(viewpoint));
      const auto r = cycle(std::nullopt);
      band.detail = "viewpoint at " + std::to_string(static_cast<int>(distance)) + " cm: band " +
                    std::to_string(current) + " -> " + std::to_string(r.band) + " (expected " +
                    std::to_string(target) + ")";
      band.outcome = r.band == target ? Outcome::Pass : Outcome::Fail;
    }
  } catch (const ChecksumMismatch& e) {
    crc = {"crc", Outcome::Fail, e.what()};
    report.checks = {crc, soundness, band};
    return report;
  }
  return finish();
}

}  // namespace thermoviz::client
