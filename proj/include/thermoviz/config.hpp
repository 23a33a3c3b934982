#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "thermoviz/field_model.hpp"
#include "thermoviz/ingestion.hpp"
#include "thermoviz/lod.hpp"
#include "thermoviz/protocol.hpp"

namespace thermoviz {

struct SourceConfig {
  enum class Kind : std::uint8_t { Synthetic, Csv };
  Kind kind = Kind::Synthetic;
  std::uint64_t seed = 42;
  SyntheticParams synthetic;
  std::filesystem::path csv_path;
  double speed = 1.0;  // replay speed multiplier, 0 = all at once
  std::string channel = "temperature";
};

/// Everything the server needs at startup. Loaded from a JSON document whose
/// keys mirror these fields; relative paths resolve against the file's folder.
struct ServerConfig {
  Room room;
  GridDims grid;
  double neutral_temperature = 20.0;
  std::vector<double> layers{0.0, 1.0, 2.0};
  std::filesystem::path sensor_layout;  // empty: generated default layout
  std::size_t default_sensor_count = 35;
  SourceConfig source;
  std::chrono::milliseconds tick_period{100};
  std::string address = "127.0.0.1";
  std::uint16_t port = 7878;
  int ws_port = 7879;  // negative disables the websocket listener
  std::filesystem::path static_dir;
  BandConfig bands;
  double epsilon_v = 0.01;
  wire::Mode mode = wire::Mode::Full;
  LodKind lod_kind = LodKind::Resolution;
  Extremum extremum = Extremum::Both;
  bool diffusion = false;
  std::size_t diffusion_waves = 4;
  std::size_t log_every = 1;  // ticks between status lines, 0 = silent
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses and validates. Throws ConfigError with the offending key or path.
ServerConfig load_config(const std::filesystem::path& path);
ServerConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir);

/// Checks ranges and that every referenced file exists.
void validate(const ServerConfig& config);

wire::Mode parse_mode(std::string_view name);

}  // namespace thermoviz
