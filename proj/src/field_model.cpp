#include "thermoviz/field_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "csv.hpp"

namespace thermoviz {

Room::Room(double l, double w, double h) : length(l), width(w), height(h) {
  if (!(l > 0) || !(w > 0) || !(h > 0)) {
    throw InvalidArgument("room dimensions must be positive");
  }
}

bool Room::contains(const Eigen::Vector3d& p, double tol) const {
  return p.x() >= -tol && p.y() >= -tol && p.z() >= -tol && p.x() <= length + tol && p.y() <= width + tol &&
         p.z() <= height + tol;
}

SensorSet::SensorSet(std::vector<Sensor> sensors, std::vector<double> layers, const Room& room)
    : sensors_(std::move(sensors)), layers_(std::move(layers)) {
  std::set<SensorId> ids;
  for (const auto& s : sensors_) {
    if (!ids.insert(s.id).second) {
      throw InvalidArgument("duplicate sensor id " + std::to_string(s.id));
    }
    if (s.x < 0 || s.x > room.length || s.y < 0 || s.y > room.width) {
      throw InvalidArgument("sensor " + std::to_string(s.id) + " lies outside the room footprint");
    }
    if (s.layer_height < 0 || s.layer_height > room.height) {
      throw InvalidArgument("sensor " + std::to_string(s.id) + " layer is above the ceiling");
    }
    const bool on_layer = std::any_of(layers_.begin(), layers_.end(),
                                      [&](double h) { return std::abs(h - s.layer_height) <= 1e-9; });
    if (!on_layer) {
      throw InvalidArgument("sensor " + std::to_string(s.id) + " is not on a configured layer");
    }
  }
  std::set<std::array<double, 3>> positions;
  for (const auto& s : sensors_) {
    if (!positions.insert({s.x, s.y, s.layer_height}).second) {
      throw InvalidArgument("sensor " + std::to_string(s.id) + " shares its position with another sensor");
    }
  }
}

std::optional<std::size_t> SensorSet::index_of(SensorId id) const {
  for (std::size_t i = 0; i < sensors_.size(); ++i) {
    if (sensors_[i].id == id) return i;
  }
  return std::nullopt;
}

ParticleGrid::ParticleGrid(const Room& room, GridDims dims, double neutral_temperature) : room_(room), dims_(dims) {
  if (dims.nx < 2 || dims.ny < 2 || dims.nz < 2) {
    throw InvalidArgument("grid needs at least 2 particles per axis");
  }
  spacing_ = {room.length / (dims.nx - 1), room.width / (dims.ny - 1), room.height / (dims.nz - 1)};
  values_ = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dims.count()), neutral_temperature);
}

std::array<int, 3> ParticleGrid::nearest_coords(const Eigen::Vector3d& p) const {
  auto axis = [](double v, double step, int n) { return std::clamp(static_cast<int>(std::lround(v / step)), 0, n - 1); };
  return {axis(p.x(), spacing_.x(), dims_.nx), axis(p.y(), spacing_.y(), dims_.ny), axis(p.z(), spacing_.z(), dims_.nz)};
}

std::uint64_t particle_count(const Room& room, double delta) {
  if (!(delta > 0)) throw InvalidArgument("particle spacing must be positive");
  const double n = (room.length + 1) * (room.height + 1) * (room.width + 1) / (delta * delta * delta);
  // Guard against 69.999... from the division before flooring.
  return static_cast<std::uint64_t>(std::floor(n * (1 + 1e-12)));
}

ParticleGrid build_grid(const Room& room, GridDims dims, double neutral_temperature) {
  return ParticleGrid(room, dims, neutral_temperature);
}

std::vector<ParticleId> neighbors(const ParticleGrid& grid, ParticleId p, int depth) {
  if (p >= grid.size()) throw InvalidArgument("particle index out of range");
  if (depth < 1) throw InvalidArgument("neighbor depth must be at least 1");
  const auto [ci, cj, ck] = grid.coords(p);
  const auto& d = grid.dims();
  std::vector<ParticleId> out;
  for (int k = std::max(0, ck - depth); k <= std::min(d.nz - 1, ck + depth); ++k) {
    for (int j = std::max(0, cj - depth); j <= std::min(d.ny - 1, cj + depth); ++j) {
      for (int i = std::max(0, ci - depth); i <= std::min(d.nx - 1, ci + depth); ++i) {
        const ParticleId q = grid.index(i, j, k);
        if (q != p) out.push_back(q);
      }
    }
  }
  return out;
}

SensorSet load_sensor_layout(const std::filesystem::path& path, const std::vector<double>& layers, const Room& room) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sensor layout " + path.string());
  std::string line;
  if (!std::getline(in, line) || csv::trim(line) != "id,x,y,layer") {
    throw std::runtime_error(path.string() + ": expected header id,x,y,layer");
  }
  std::vector<Sensor> sensors;
  for (int line_no = 2; std::getline(in, line); ++line_no) {
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    const auto id = f.size() == 4 ? csv::parse_number<unsigned>(f[0]) : std::nullopt;
    const auto x = f.size() == 4 ? csv::parse_number<double>(f[1]) : std::nullopt;
    const auto y = f.size() == 4 ? csv::parse_number<double>(f[2]) : std::nullopt;
    const auto z = f.size() == 4 ? csv::parse_number<double>(f[3]) : std::nullopt;
    if (!id || !x || !y || !z || *id > 0xFFFF) {
      throw std::runtime_error(path.string() + ": malformed row at line " + std::to_string(line_no));
    }
    sensors.push_back({static_cast<SensorId>(*id), *x, *y, *z, 0.0});
  }
  return SensorSet(std::move(sensors), layers, room);
}

void write_sensor_layout(const std::filesystem::path& path, const SensorSet& sensors) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "id,x,y,layer\n";
  out.precision(17);
  for (const auto& s : sensors.sensors()) {
    out << s.id << ',' << s.x << ',' << s.y << ',' << s.layer_height << '\n';
  }
}

SensorSet default_sensor_layout(const Room& room, const std::vector<double>& layers, std::size_t count,
                                std::uint32_t seed) {
  if (layers.empty()) throw InvalidArgument("at least one sensor layer is required");
  std::mt19937 rng(seed);
  // Raw engine output keeps the layout identical across standard libraries.
  auto unit = [&rng] { return static_cast<double>(rng()) / 4294967296.0; };

  std::vector<Sensor> sensors;
  const std::size_t per_layer = count / layers.size();
  const std::size_t extra = count % layers.size();
  SensorId next_id = 1;
  for (std::size_t L = 0; L < layers.size(); ++L) {
    const std::size_t n = per_layer + (L < extra ? 1 : 0);
    if (n == 0) continue;
    const auto cols = static_cast<std::size_t>(
        std::max(1.0, std::ceil(std::sqrt(static_cast<double>(n) * room.length / room.width))));
    const std::size_t rows = (n + cols - 1) / cols;
    const double cell_x = room.length / static_cast<double>(cols);
    const double cell_y = room.width / static_cast<double>(rows);
    for (std::size_t s = 0; s < n; ++s) {
      const double jx = (unit() - 0.5) * 0.5;
      const double jy = (unit() - 0.5) * 0.5;
      const double x = (static_cast<double>(s % cols) + 0.5 + jx) * cell_x;
      const double y = (static_cast<double>(s / cols) + 0.5 + jy) * cell_y;
      sensors.push_back({next_id++, std::clamp(x, 0.0, room.length), std::clamp(y, 0.0, room.width), layers[L], 0.0});
    }
  }
  return SensorSet(std::move(sensors), layers, room);
}

}  // namespace thermoviz
