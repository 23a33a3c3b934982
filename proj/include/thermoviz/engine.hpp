#pragma once

#include <array>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "thermoviz/config.hpp"
#include "thermoviz/ingestion.hpp"
#include "thermoviz/lod.hpp"
#include "thermoviz/segmentation.hpp"

namespace thermoviz {

/// Field state of one tick. Never mutated after publication.
struct FieldSnapshot {
  std::uint64_t tick = 0;
  Eigen::VectorXd readings;  // per sensor index
  ParticleGrid grid;         // base lattice carrying this tick's values
  std::vector<float> sensor_values;
  std::vector<std::uint8_t> sensors_full;  // encoded SENSORS payload, full mode
};

using SnapshotPtr = std::shared_ptr<const FieldSnapshot>;

/// Point layout of a level as it goes on the wire. Shared between ticks while
/// the point set stays the same, so pointer equality means "same layout".
struct LevelLayout {
  int band = 0;
  LodKind kind = LodKind::Resolution;
  std::vector<std::uint32_t> ids;  // wire ids, ascending
  std::vector<std::array<float, 3>> positions;
  std::optional<DiffusionSchedule> schedule;  // over level indices
};

struct EncodedLevel {
  std::uint64_t tick = 0;
  int band = 0;
  std::shared_ptr<const LevelLayout> layout;
  Eigen::VectorXd values;
  std::vector<float> values_f32;
  std::vector<std::uint8_t> particles_full;  // encoded PARTICLES payload, full mode
  std::chrono::microseconds build_time{0};   // materialize + encode

  std::size_t size() const { return values_f32.size(); }
};

using LevelPtr = std::shared_ptr<const EncodedLevel>;

struct EngineOptions {
  BandConfig bands;
  LodKind lod_kind = LodKind::Resolution;
  Extremum extremum = Extremum::Both;
  bool diffusion = false;
  std::size_t diffusion_waves = 4;
  double neutral_temperature = 20.0;
};

/// Owns the precomputed geometry and publishes one snapshot per tick. A
/// single writer calls tick(); any number of sessions read snapshots and
/// materialize levels concurrently.
class FieldEngine {
 public:
  FieldEngine(const Room& room, GridDims dims, SensorSet sensors, EngineOptions options);

  const ParticleGrid& grid() const { return grid_; }
  const SensorSet& sensors() const { return sensors_; }
  const TetraMesh& mesh() const { return mesh_; }
  const WeightMap& weights() const { return weights_; }
  const EngineOptions& options() const { return options_; }
  const DiffusionSchedule& schedule() const { return schedule_; }
  std::chrono::microseconds preprocessing_time() const { return preprocessing_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Room center in centimeters, the viewpoint-distance target.
  Eigen::Vector3d target_cm() const { return grid_.room().center() * 100.0; }

  /// Applies the batch on top of the current readings, interpolates and
  /// publishes the next snapshot (tick + 1). Unknown sensor ids are skipped.
  SnapshotPtr tick(const ReadingBatch& batch);

  SnapshotPtr latest() const;

  /// Blocks until a snapshot newer than `after` exists; nullptr on stop or timeout.
  SnapshotPtr wait_newer(std::uint64_t after, std::stop_token stop,
                         std::chrono::milliseconds timeout = std::chrono::milliseconds::max()) const;

  /// The band's level for `snapshot`, built once and shared by all sessions.
  LevelPtr level(const SnapshotPtr& snapshot, int band) const;

  /// Unknown ids seen by tick() so far.
  std::size_t skipped_readings() const;

 private:
  LodLevel materialize(const FieldSnapshot& snapshot, int band) const;
  std::shared_ptr<const LevelLayout> layout_for(int band, const LodLevel& level) const;
  SnapshotPtr make_snapshot(std::uint64_t tick, const Eigen::VectorXd& readings) const;

  ParticleGrid grid_;
  SensorSet sensors_;
  EngineOptions options_;
  TetraMesh mesh_;
  WeightMap weights_;
  DiffusionSchedule schedule_;
  std::unique_ptr<Resolver> resolver_;
  std::unordered_map<SensorId, std::size_t> index_of_;
  std::chrono::microseconds preprocessing_{0};
  std::vector<std::string> warnings_;

  Eigen::VectorXd readings_;  // writer-owned

  mutable std::mutex mu_;
  mutable std::condition_variable published_;
  SnapshotPtr latest_;
  std::size_t skipped_ = 0;

  mutable std::mutex cache_mu_;
  mutable std::map<std::pair<std::uint64_t, int>, LevelPtr> levels_;
  mutable std::map<int, std::shared_ptr<const LevelLayout>> layouts_;
};

/// Builds the engine described by `config`: layout file (or generated
/// default), grid, mesh and weights.
std::unique_ptr<FieldEngine> make_engine(const ServerConfig& config);

/// Reading source described by `config`.
std::unique_ptr<ReadingSource> make_source(const ServerConfig& config, const SensorSet& sensors);

}  // namespace thermoviz
