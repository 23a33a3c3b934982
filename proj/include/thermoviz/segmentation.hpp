#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <map>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "thermoviz/field_model.hpp"

namespace thermoviz {

/// Raised when the sensors cannot be tetrahedralized (fewer than four, or all
/// coplanar). Callers fall back to nearest-sensor weighting for every particle.
class DegenerateInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Tetrahedron {
  std::array<std::size_t, 4> vertices;  // indices into the SensorSet, positively oriented
  Eigen::Vector3d circumcenter;
  double circumradius = 0;
};

struct TetraMesh {
  std::vector<Tetrahedron> tetrahedra;
  bool degenerate = false;

  std::array<Eigen::Vector3d, 4> corners(const Tetrahedron& t, const SensorSet& sensors) const {
    return {sensors.position(t.vertices[0]), sensors.position(t.vertices[1]), sensors.position(t.vertices[2]),
            sensors.position(t.vertices[3])};
  }
};

/// Delaunay tetrahedralization of the sensor positions (incremental
/// Bowyer-Watson insertion on exact-sign predicates).
/// Throws DegenerateInput for fewer than four sensors or a coplanar set.
TetraMesh tetrahedralize(const SensorSet& sensors);

/// Boundary tolerance on normalized barycentric weights.
inline constexpr double kBarycentricEps = 1e-9;

/// Delaunay check tolerance relative to the room diagonal.
inline constexpr double kDelaunayRelEps = 1e-7;

bool point_in_tetrahedron(const Eigen::Vector3d& p, const Tetrahedron& tet, const SensorSet& sensors);

/// Barycentric coordinates of `p`; throws InvalidArgument if `p` lies outside
/// the tetrahedron beyond kBarycentricEps.
std::array<double, 4> barycentric_weights(const Eigen::Vector3d& p, const Tetrahedron& tet, const SensorSet& sensors);

/// Nearest sensor (index into `sensors`) of every particle, grown outward from
/// the sensor seeds over the lattice in increasing distance order. Ties go to
/// the lower sensor id.
std::vector<std::uint32_t> nearest_sensor_expansion(const ParticleGrid& grid, const SensorSet& sensors);

/// Per-particle interpolation recipe.
struct WeightEntry {
  enum class Kind : std::uint8_t { Inside, Outside };
  Kind kind = Kind::Outside;
  std::uint32_t tet = 0;                         // Inside only
  std::array<std::uint32_t, 4> sensors{};        // Inside: tet vertices; Outside: sensors[0] is the nearest
  std::array<double, 4> weights{1.0, 0, 0, 0};   // Inside: barycentric; Outside: {1,0,0,0}
};

class WeightMap {
 public:
  WeightMap() = default;
  WeightMap(std::vector<WeightEntry> entries, std::size_t sensor_count);

  std::size_t size() const { return entries_.size(); }
  const WeightEntry& operator[](std::size_t p) const { return entries_[p]; }
  const std::vector<WeightEntry>& entries() const { return entries_; }
  std::size_t sensor_count() const { return sensor_count_; }
  std::size_t inside_count() const;

  /// Interpolation operator, N x M row-stochastic.
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& matrix() const { return matrix_; }

  /// Whether particle `p` depends on sensor index `s`.
  bool references(std::size_t p, std::uint32_t s) const;

 private:
  std::vector<WeightEntry> entries_;
  std::size_t sensor_count_ = 0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix_;
};

/// Classify every particle: Inside the first tetrahedron (ascending id) that
/// contains it, else Outside with its nearest sensor. A degenerate mesh yields
/// an all-Outside map.
WeightMap locate(const ParticleGrid& grid, const TetraMesh& mesh, const SensorSet& sensors);

using Readings = std::map<SensorId, double>;

/// Readings ordered by sensor index; throws InvalidArgument naming the first
/// sensor id without a reading.
Eigen::VectorXd dense_readings(const Readings& readings, const SensorSet& sensors);

/// values = W * readings, written into the grid.
void interpolate(const WeightMap& wm, const Eigen::VectorXd& readings, ParticleGrid& grid);
void interpolate(const WeightMap& wm, const Readings& readings, const SensorSet& sensors, ParticleGrid& grid);

}  // namespace thermoviz
