#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "thermoviz/field_model.hpp"
#include "thermoviz/segmentation.hpp"

namespace thermoviz {

/// Distance bands (centimeters) and the per-band parameters of each LOD method.
struct BandConfig {
  std::vector<double> thresholds{500, 1000, 1500, 2000};
  std::vector<int> cluster_factors{1, 2, 5, 10};
  std::vector<int> neighbor_depths{0, 1, 2, 3};
  std::vector<std::size_t> targets{120000, 30000, 7500, 1875};

  std::size_t count() const { return thresholds.size(); }
  /// Throws InvalidArgument unless thresholds strictly increase and every
  /// per-band list has one entry per band.
  void validate() const;
};

enum class LodKind : std::uint8_t { Cluster, Significant, Resolution };

std::string_view to_string(LodKind kind);
LodKind parse_lod_kind(std::string_view name);

struct LodLevel {
  int band = 0;
  LodKind kind = LodKind::Resolution;
  Eigen::Matrix3Xd positions;
  Eigen::VectorXd values;
  /// Original particle ids, present when the level is a subset of the grid.
  std::optional<std::vector<ParticleId>> source_ids;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
};

/// Mean value and barycenter of each factor^3 lattice block; block counts use
/// ceiling division per axis. Factor 1 reproduces the grid.
LodLevel cluster_grid(const ParticleGrid& grid, int factor);

enum class Extremum : std::uint8_t { High, Low, Both };

/// Particles that are strict extrema over their depth-`depth` Chebyshev
/// neighborhood. Depth 0 keeps every particle. An empty result (flat field)
/// falls back to the particles nearest each sensor.
LodLevel significant_vertices(const ParticleGrid& grid, const SensorSet& sensors, int depth, Extremum mode);

/// First band whose threshold exceeds |viewpoint - target|; clamps to the last band.
int select_band(const Eigen::Vector3d& viewpoint, const Eigen::Vector3d& target, const BandConfig& bands);

/// Evenly strided subset of [0, n) with exactly `target` ids: id_k = floor(k n / target).
std::vector<ParticleId> stride_ids(std::size_t n, std::size_t target);

/// Server-side re-resolution. Targets above the base count are met by a denser
/// lattice (in-plane dimensions doubled until large enough, then strided to
/// the exact count) located and interpolated against the sensor mesh; smaller
/// targets are strided subsets of the base grid carrying its stored values.
/// Dense lattices and their weight maps are built once, at construction.
class Resolver {
 public:
  Resolver(const ParticleGrid& base, const SensorSet& sensors, const TetraMesh& mesh, BandConfig bands);

  LodLevel reresolve(const ParticleGrid& grid, const Eigen::VectorXd& readings, int band) const;
  const BandConfig& bands() const { return bands_; }

 private:
  struct Dense {
    ParticleGrid grid;
    WeightMap weights;
    std::vector<ParticleId> ids;
    Eigen::Matrix3Xd positions;
  };
  BandConfig bands_;
  std::map<int, Dense> dense_;
};

LodLevel reresolve(const ParticleGrid& grid, const SensorSet& sensors, const TetraMesh& mesh,
                   const Eigen::VectorXd& readings, int band, const BandConfig& bands);

/// Particles ranked by distance to their nearest sensor, cut into K contiguous
/// waves whose sizes differ by at most one. Wave 0 is nearest.
struct DiffusionSchedule {
  std::vector<std::vector<ParticleId>> waves;
  std::vector<std::uint32_t> wave_of;  // per particle
  std::vector<double> distance;        // per particle, to the nearest sensor

  std::size_t wave_count() const { return waves.size(); }
};

DiffusionSchedule diffusion_schedule(const ParticleGrid& grid, const SensorSet& sensors, std::size_t waves);

/// Same ranking for an arbitrary point set (a dense or clustered level), with
/// nearest sensors found by exhaustive scan. Ids are column indices.
DiffusionSchedule diffusion_schedule(const Eigen::Matrix3Xd& positions, const SensorSet& sensors, std::size_t waves);

/// Schedule of a subset level: entry i inherits the wave and distance of
/// grid particle ids[i]. Wave sizes follow the subset and may be uneven.
DiffusionSchedule restrict_schedule(const DiffusionSchedule& base, const std::vector<ParticleId>& ids);

/// Whether `current` must be transmitted given what was last sent. NaN in
/// `last_sent` means never transmitted.
inline bool needs_send(float current, float last_sent, double epsilon) {
  return last_sent != last_sent || std::abs(static_cast<double>(current) - static_cast<double>(last_sent)) > epsilon;
}

/// Changed particles of wave `cursor`: those whose f32 value differs from
/// `last_sent` by more than `epsilon` (or were never sent). Pure; the caller
/// commits `last_sent` once the transmission is acknowledged.
std::vector<ValueUpdate> next_wave(const DiffusionSchedule& schedule, std::size_t cursor,
                                   const Eigen::VectorXd& values, const std::vector<float>& last_sent,
                                   double epsilon);

}  // namespace thermoviz
