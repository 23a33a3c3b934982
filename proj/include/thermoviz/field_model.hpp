#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace thermoviz {

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using ParticleId = std::uint32_t;
using SensorId = std::uint16_t;

/// One (id, value) pair of a delta transmission; values travel as f32.
struct ValueUpdate {
  std::uint32_t id = 0;
  float value = 0;
  friend bool operator==(const ValueUpdate&, const ValueUpdate&) = default;
};

/// Axis-aligned room box in meters. x runs along the length, y along the width
/// and z along the height.
struct Room {
  double length = 4.0;
  double width = 3.0;
  double height = 2.5;

  Room() = default;
  Room(double l, double w, double h);

  Eigen::Vector3d extent() const { return {length, width, height}; }
  Eigen::Vector3d center() const { return extent() / 2; }
  double diagonal() const { return extent().norm(); }
  bool contains(const Eigen::Vector3d& p, double tol = 1e-9) const;
};

struct Sensor {
  SensorId id = 0;
  double x = 0;
  double y = 0;
  double layer_height = 0;
  double value = 0;  // degrees Celsius

  Eigen::Vector3d position() const { return {x, y, layer_height}; }
};

/// Ordered sensor list plus the layer heights they sit on. Validated on
/// construction: ids unique, positions distinct and inside the room, heights
/// taken from `layers`.
class SensorSet {
 public:
  SensorSet() = default;
  SensorSet(std::vector<Sensor> sensors, std::vector<double> layers, const Room& room);

  std::size_t size() const { return sensors_.size(); }
  bool empty() const { return sensors_.empty(); }
  const Sensor& operator[](std::size_t i) const { return sensors_[i]; }
  const std::vector<Sensor>& sensors() const { return sensors_; }
  const std::vector<double>& layers() const { return layers_; }

  std::optional<std::size_t> index_of(SensorId id) const;
  Eigen::Vector3d position(std::size_t i) const { return sensors_[i].position(); }

 private:
  std::vector<Sensor> sensors_;
  std::vector<double> layers_;
};

struct GridDims {
  int nx = 40;
  int ny = 30;
  int nz = 25;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  friend bool operator==(const GridDims&, const GridDims&) = default;
};

/// Regular lattice of particles spanning the room box corner to corner.
///
/// Particle p maps to lattice coordinates (i, j, k) with
/// p = i + nx * (j + ny * k): k is the outermost axis, i the innermost.
/// Position(p) = (i * dx, j * dy, k * dz) with dx = length / (nx - 1) and so on.
/// Topology is fixed at construction; only the value array is mutable.
class ParticleGrid {
 public:
  ParticleGrid(const Room& room, GridDims dims, double neutral_temperature = 20.0);

  const Room& room() const { return room_; }
  const GridDims& dims() const { return dims_; }
  std::size_t size() const { return dims_.count(); }
  const Eigen::Vector3d& spacing() const { return spacing_; }
  /// Length of a lattice cell's main diagonal.
  double cell_diagonal() const { return spacing_.norm(); }

  ParticleId index(int i, int j, int k) const {
    return static_cast<ParticleId>(i + dims_.nx * (j + dims_.ny * k));
  }
  std::array<int, 3> coords(ParticleId p) const {
    const int i = static_cast<int>(p % static_cast<ParticleId>(dims_.nx));
    const ParticleId rest = p / static_cast<ParticleId>(dims_.nx);
    return {i, static_cast<int>(rest % static_cast<ParticleId>(dims_.ny)),
            static_cast<int>(rest / static_cast<ParticleId>(dims_.ny))};
  }
  Eigen::Vector3d position(int i, int j, int k) const { return {i * spacing_.x(), j * spacing_.y(), k * spacing_.z()}; }
  Eigen::Vector3d position(ParticleId p) const {
    const auto c = coords(p);
    return position(c[0], c[1], c[2]);
  }
  /// Lattice coordinate nearest to `p` on each axis, clamped to the grid.
  std::array<int, 3> nearest_coords(const Eigen::Vector3d& p) const;

  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }

 private:
  Room room_;
  GridDims dims_;
  Eigen::Vector3d spacing_;
  Eigen::VectorXd values_;
};

/// Nominal particle count ((l+1)(h+1)(w+1)) / delta^3, floored. A sizing
/// helper only: the canonical grid is specified by its integer dimensions.
std::uint64_t particle_count(const Room& room, double delta);

ParticleGrid build_grid(const Room& room, GridDims dims, double neutral_temperature = 20.0);

/// Particles within Chebyshev lattice distance `depth` of `p`, excluding `p`,
/// clipped at the grid boundary, in ascending id order.
std::vector<ParticleId> neighbors(const ParticleGrid& grid, ParticleId p, int depth);

/// Sensor layout CSV with header `id,x,y,layer` (meters).
SensorSet load_sensor_layout(const std::filesystem::path& path, const std::vector<double>& layers, const Room& room);
void write_sensor_layout(const std::filesystem::path& path, const SensorSet& sensors);

/// Deterministic layout spreading `count` sensors over `layers`, jittered off
/// the regular pattern so the set is in general position.
SensorSet default_sensor_layout(const Room& room, const std::vector<double>& layers, std::size_t count = 35,
                                std::uint32_t seed = 7);

}  // namespace thermoviz
