#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <stop_token>
#include <string>
#include <vector>

#include "thermoviz/field_model.hpp"
#include "thermoviz/segmentation.hpp"

namespace thermoviz {

struct ReadingBatch {
  std::uint64_t tick = 0;  // replay: timestamp in ms; synthetic: generation index
  Readings readings;
  friend bool operator==(const ReadingBatch&, const ReadingBatch&) = default;
};

/// Single-producer stream of reading batches. `next` blocks for pacing and
/// returns nullopt once the stream is exhausted or `stop` is requested.
class ReadingSource {
 public:
  virtual ~ReadingSource() = default;
  virtual std::optional<ReadingBatch> next(std::stop_token stop = {}) = 0;
};

/// Replays a `timestamp,sensor_id,value[,channel]` CSV (timestamps in ms).
/// Rows sharing a timestamp form one batch; batches are released
/// (timestamp - first timestamp) / speed after start. Speed 0 releases every
/// batch immediately.
class CsvReplay : public ReadingSource {
 public:
  CsvReplay(const std::filesystem::path& path, double speed, const std::set<SensorId>& known_ids,
            std::string channel = "temperature");

  const std::vector<ReadingBatch>& batches() const { return batches_; }
  /// Release offset of each batch from the start of the replay.
  std::vector<std::chrono::milliseconds> offsets() const;
  /// Human-readable notes about skipped rows (unknown sensor ids).
  const std::vector<std::string>& warnings() const { return warnings_; }

  std::optional<ReadingBatch> next(std::stop_token stop = {}) override;

 private:
  std::vector<ReadingBatch> batches_;
  std::vector<std::string> warnings_;
  double speed_;
  std::size_t cursor_ = 0;
  std::optional<std::chrono::steady_clock::time_point> start_;
};

std::unique_ptr<CsvReplay> replay_csv(const std::filesystem::path& path, double speed,
                                      const std::set<SensorId>& known_ids, std::string channel = "temperature");

struct SyntheticParams {
  double base = 22.0;       // degrees Celsius
  double amplitude = 4.0;   // degrees Celsius
  double period_s = 60.0;   // T
  double noise = 0.2;       // uniform in [-noise, +noise]
};

/// base + amplitude * sin(2 pi t / T + phase_i) + noise, with t = tick * period.
/// Phases and noise derive from the seed only, so equal seeds give equal streams.
class SyntheticStream : public ReadingSource {
 public:
  SyntheticStream(const SensorSet& sensors, std::uint64_t seed, std::chrono::milliseconds period,
                  SyntheticParams params = {});

  ReadingBatch generate(std::uint64_t tick) const;
  const std::vector<double>& phases() const { return phases_; }

  std::optional<ReadingBatch> next(std::stop_token stop = {}) override;

 private:
  std::vector<SensorId> ids_;
  std::vector<double> phases_;
  std::uint64_t seed_;
  std::chrono::milliseconds period_;
  SyntheticParams params_;
  std::uint64_t tick_ = 0;
  std::optional<std::chrono::steady_clock::time_point> start_;
};

std::unique_ptr<SyntheticStream> synthetic_stream(const SensorSet& sensors, std::uint64_t seed,
                                                  std::chrono::milliseconds period, SyntheticParams params = {});

/// Sleeps until `deadline` in short slices; false if `stop` fired first.
bool sleep_until(std::chrono::steady_clock::time_point deadline, const std::stop_token& stop);

}  // namespace thermoviz
