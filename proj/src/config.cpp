#include "thermoviz/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace thermoviz {
namespace {

using nlohmann::json;

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

wire::Mode parse_mode(std::string_view name) {
  if (name == "full") return wire::Mode::Full;
  if (name == "delta") return wire::Mode::Delta;
  throw ConfigError("unknown mode '" + std::string(name) + "' (expected full or delta)");
}

ServerConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ServerConfig c;

  if (j.contains("room")) {
    const auto& r = j["room"];
    double l = c.room.length, w = c.room.width, h = c.room.height;
    read(r, "length", l);
    read(r, "width", w);
    read(r, "height", h);
    try {
      c.room = Room(l, w, h);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("room: ") + e.what());
    }
  }
  if (j.contains("grid")) {
    read(j["grid"], "nx", c.grid.nx);
    read(j["grid"], "ny", c.grid.ny);
    read(j["grid"], "nz", c.grid.nz);
  }
  read(j, "neutral_temperature", c.neutral_temperature);
  read(j, "layers", c.layers);
  std::string layout;
  read(j, "sensor_layout", layout);
  c.sensor_layout = resolve(base_dir, layout);
  read(j, "default_sensor_count", c.default_sensor_count);

  if (j.contains("source")) {
    const auto& s = j["source"];
    std::string type = "synthetic";
    read(s, "type", type);
    if (type == "synthetic") {
      c.source.kind = SourceConfig::Kind::Synthetic;
    } else if (type == "csv") {
      c.source.kind = SourceConfig::Kind::Csv;
    } else {
      throw ConfigError("source.type must be synthetic or csv, got '" + type + "'");
    }
    read(s, "seed", c.source.seed);
    read(s, "base", c.source.synthetic.base);
    read(s, "amplitude", c.source.synthetic.amplitude);
    read(s, "period_s", c.source.synthetic.period_s);
    read(s, "noise", c.source.synthetic.noise);
    std::string path;
    read(s, "path", path);
    c.source.csv_path = resolve(base_dir, path);
    read(s, "speed", c.source.speed);
    read(s, "channel", c.source.channel);
  }

  std::int64_t tick_ms = c.tick_period.count();
  read(j, "tick_ms", tick_ms);
  c.tick_period = std::chrono::milliseconds(tick_ms);

  if (j.contains("listen")) {
    const auto& l = j["listen"];
    read(l, "address", c.address);
    int port = c.port;
    read(l, "port", port);
    if (port < 0 || port > 65535) throw ConfigError("listen.port out of range");
    c.port = static_cast<std::uint16_t>(port);
    read(l, "ws_port", c.ws_port);
  }
  std::string static_dir;
  read(j, "static_dir", static_dir);
  c.static_dir = resolve(base_dir, static_dir);

  if (j.contains("bands")) {
    const auto& b = j["bands"];
    read(b, "thresholds", c.bands.thresholds);
    read(b, "cluster_factors", c.bands.cluster_factors);
    read(b, "neighbor_depths", c.bands.neighbor_depths);
    read(b, "targets", c.bands.targets);
  }
  read(j, "epsilon_v", c.epsilon_v);
  std::string mode = "full";
  read(j, "mode", mode);
  c.mode = parse_mode(mode);
  std::string kind = "resolution";
  read(j, "lod_kind", kind);
  try {
    c.lod_kind = parse_lod_kind(kind);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  std::string extremum = "both";
  read(j, "extremum", extremum);
  if (extremum == "high") {
    c.extremum = Extremum::High;
  } else if (extremum == "low") {
    c.extremum = Extremum::Low;
  } else if (extremum == "both") {
    c.extremum = Extremum::Both;
  } else {
    throw ConfigError("extremum must be high, low or both");
  }
  read(j, "diffusion", c.diffusion);
  read(j, "diffusion_waves", c.diffusion_waves);
  read(j, "log_every", c.log_every);
  return c;
}

ServerConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  auto config = parse_config(text.str(), path.parent_path());
  validate(config);
  return config;
}

void validate(const ServerConfig& c) {
  if (c.grid.nx < 2 || c.grid.ny < 2 || c.grid.nz < 2) throw ConfigError("grid needs at least 2 particles per axis");
  if (c.tick_period.count() < 1) throw ConfigError("tick_ms must be at least 1");
  if (c.epsilon_v < 0) throw ConfigError("epsilon_v must be >= 0");
  if (c.diffusion_waves < 1) throw ConfigError("diffusion_waves must be >= 1");
  if (c.diffusion_waves > c.grid.count()) throw ConfigError("diffusion_waves exceeds the particle count");
  if (c.layers.empty()) throw ConfigError("at least one sensor layer is required");
  try {
    c.bands.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("bands: ") + e.what());
  }
  if (c.bands.count() > 255) throw ConfigError("at most 255 bands fit the header");
  if (!c.sensor_layout.empty() && !std::filesystem::exists(c.sensor_layout)) {
    throw ConfigError("sensor layout file not found: " + c.sensor_layout.string());
  }
  if (c.source.kind == SourceConfig::Kind::Csv) {
    if (c.source.csv_path.empty()) throw ConfigError("source.path is required for csv sources");
    if (!std::filesystem::exists(c.source.csv_path)) {
      throw ConfigError("readings file not found: " + c.source.csv_path.string());
    }
    if (c.source.speed < 0) throw ConfigError("source.speed must be >= 0");
  }
}

}  // namespace thermoviz
