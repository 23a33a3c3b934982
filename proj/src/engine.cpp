#include "thermoviz/engine.hpp"

#include <numeric>

#include <spdlog/spdlog.h>

#include "thermoviz/protocol.hpp"

namespace thermoviz {
namespace {

// Levels older than this many ticks behind the newest are dropped from the cache.
constexpr std::uint64_t kCacheDepth = 4;

}  // namespace

FieldEngine::FieldEngine(const Room& room, GridDims dims, SensorSet sensors, EngineOptions options)
    : grid_(room, dims, options.neutral_temperature), sensors_(std::move(sensors)), options_(std::move(options)) {
  options_.bands.validate();
  if (sensors_.empty()) throw InvalidArgument("at least one sensor is required");
  const auto t0 = std::chrono::steady_clock::now();

  try {
    mesh_ = tetrahedralize(sensors_);
  } catch (const DegenerateInput& e) {
    mesh_.degenerate = true;
    warnings_.push_back(std::string("sensors cannot be tetrahedralized (") + e.what() +
                        "); every particle takes its nearest sensor");
  }
  weights_ = locate(grid_, mesh_, sensors_);
  schedule_ = diffusion_schedule(grid_, sensors_, std::min(options_.diffusion_waves, grid_.size()));
  if (options_.lod_kind == LodKind::Resolution) {
    resolver_ = std::make_unique<Resolver>(grid_, sensors_, mesh_, options_.bands);
  }
  for (std::size_t i = 0; i < sensors_.size(); ++i) index_of_[sensors_[i].id] = i;
  preprocessing_ = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - t0);

  readings_ = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(sensors_.size()), options_.neutral_temperature);
  latest_ = make_snapshot(0, readings_);
}

SnapshotPtr FieldEngine::make_snapshot(std::uint64_t tick, const Eigen::VectorXd& readings) const {
  auto snap = std::make_shared<FieldSnapshot>(FieldSnapshot{tick, readings, grid_, {}, {}});
  interpolate(weights_, readings, snap->grid);
  wire::SensorsFull records;
  records.records.reserve(sensors_.size());
  for (std::size_t i = 0; i < sensors_.size(); ++i) {
    const Eigen::Vector3f p = sensors_.position(i).cast<float>();
    const auto v = static_cast<float>(readings[static_cast<Eigen::Index>(i)]);
    snap->sensor_values.push_back(v);
    records.records.push_back({sensors_[i].id, {p.x(), p.y(), p.z()}, v});
  }
  snap->sensors_full = wire::encode_payload(records);
  return snap;
}

SnapshotPtr FieldEngine::tick(const ReadingBatch& batch) {
  std::size_t skipped = 0;
  for (const auto& [id, value] : batch.readings) {
    const auto it = index_of_.find(id);
    if (it == index_of_.end() || !std::isfinite(value)) {
      ++skipped;
      spdlog::warn("skipping reading for unknown sensor id {}", id);
      continue;
    }
    readings_[static_cast<Eigen::Index>(it->second)] = value;
  }
  std::uint64_t next;
  {
    std::lock_guard lock(mu_);
    next = latest_->tick + 1;
  }
  auto snap = make_snapshot(next, readings_);
  {
    std::lock_guard lock(mu_);
    latest_ = snap;
    skipped_ += skipped;
  }
  published_.notify_all();
  {
    std::lock_guard lock(cache_mu_);
    while (!levels_.empty() && levels_.begin()->first.first + kCacheDepth < next) levels_.erase(levels_.begin());
  }
  return snap;
}

SnapshotPtr FieldEngine::latest() const {
  std::lock_guard lock(mu_);
  return latest_;
}

std::size_t FieldEngine::skipped_readings() const {
  std::lock_guard lock(mu_);
  return skipped_;
}

SnapshotPtr FieldEngine::wait_newer(std::uint64_t after, std::stop_token stop, std::chrono::milliseconds timeout) const {
  // Registered before taking mu_: the callback runs inline if stop was already requested.
  std::stop_callback wake(stop, [this] {
    std::lock_guard lock(mu_);
    published_.notify_all();
  });
  std::unique_lock lock(mu_);
  const auto ready = [&] { return latest_->tick > after; };
  const auto done = [&] { return ready() || stop.stop_requested(); };
  if (timeout == std::chrono::milliseconds::max()) {
    published_.wait(lock, done);
  } else {
    published_.wait_for(lock, timeout, done);
  }
  return ready() ? latest_ : nullptr;
}

LodLevel FieldEngine::materialize(const FieldSnapshot& snapshot, int band) const {
  const auto b = static_cast<std::size_t>(band);
  switch (options_.lod_kind) {
    case LodKind::Cluster:
      return cluster_grid(snapshot.grid, options_.bands.cluster_factors[b]);
    case LodKind::Significant:
      return significant_vertices(snapshot.grid, sensors_, options_.bands.neighbor_depths[b], options_.extremum);
    case LodKind::Resolution:
      break;
  }
  return resolver_->reresolve(snapshot.grid, snapshot.readings, band);
}

std::shared_ptr<const LevelLayout> FieldEngine::layout_for(int band, const LodLevel& level) const {
  std::vector<std::uint32_t> ids(level.size());
  if (level.source_ids) {
    ids.assign(level.source_ids->begin(), level.source_ids->end());
  } else {
    std::iota(ids.begin(), ids.end(), 0u);
  }
  {
    std::lock_guard lock(cache_mu_);
    const auto it = layouts_.find(band);
    // Cluster and resolution point sets depend only on the band; significant
    // sets follow the field and are reused only while unchanged.
    if (it != layouts_.end() && (options_.lod_kind != LodKind::Significant || it->second->ids == ids)) {
      return it->second;
    }
  }
  auto layout = std::make_shared<LevelLayout>();
  layout->band = band;
  layout->kind = options_.lod_kind;
  layout->positions.resize(level.size());
  for (std::size_t i = 0; i < level.size(); ++i) {
    const Eigen::Vector3f p = level.positions.col(static_cast<Eigen::Index>(i)).cast<float>();
    layout->positions[i] = {p.x(), p.y(), p.z()};
  }
  if (options_.diffusion && level.size() > 0) {
    if (level.source_ids) {
      layout->schedule = restrict_schedule(schedule_, *level.source_ids);
    } else {
      layout->schedule = diffusion_schedule(level.positions, sensors_, std::min(options_.diffusion_waves, level.size()));
    }
  }
  layout->ids = std::move(ids);
  std::lock_guard lock(cache_mu_);
  layouts_[band] = layout;
  return layout;
}

LevelPtr FieldEngine::level(const SnapshotPtr& snapshot, int band) const {
  if (band < 0 || static_cast<std::size_t>(band) >= options_.bands.count()) throw InvalidArgument("invalid band index");
  const auto key = std::make_pair(snapshot->tick, band);
  {
    std::lock_guard lock(cache_mu_);
    if (const auto it = levels_.find(key); it != levels_.end()) return it->second;
  }

  const auto t0 = std::chrono::steady_clock::now();
  LodLevel lod = materialize(*snapshot, band);
  auto out = std::make_shared<EncodedLevel>();
  out->tick = snapshot->tick;
  out->band = band;
  out->layout = layout_for(band, lod);
  out->values = std::move(lod.values);
  out->values_f32.resize(out->layout->ids.size());
  wire::ParticlesFull records;
  records.records.resize(out->layout->ids.size());
  for (std::size_t i = 0; i < records.records.size(); ++i) {
    const auto v = static_cast<float>(out->values[static_cast<Eigen::Index>(i)]);
    out->values_f32[i] = v;
    records.records[i] = {out->layout->ids[i], out->layout->positions[i], v};
  }
  out->particles_full = wire::encode_payload(records);
  out->build_time = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - t0);

  std::lock_guard lock(cache_mu_);
  const auto [it, inserted] = levels_.emplace(key, std::move(out));
  return it->second;
}

std::unique_ptr<FieldEngine> make_engine(const ServerConfig& config) {
  SensorSet sensors = config.sensor_layout.empty()
                          ? default_sensor_layout(config.room, config.layers, config.default_sensor_count)
                          : load_sensor_layout(config.sensor_layout, config.layers, config.room);
  EngineOptions options;
  options.bands = config.bands;
  options.lod_kind = config.lod_kind;
  options.extremum = config.extremum;
  options.diffusion = config.diffusion;
  options.diffusion_waves = config.diffusion_waves;
  options.neutral_temperature = config.neutral_temperature;
  return std::make_unique<FieldEngine>(config.room, config.grid, std::move(sensors), std::move(options));
}

std::unique_ptr<ReadingSource> make_source(const ServerConfig& config, const SensorSet& sensors) {
  if (config.source.kind == SourceConfig::Kind::Csv) {
    std::set<SensorId> ids;
    for (const auto& s : sensors.sensors()) ids.insert(s.id);
    auto replay = replay_csv(config.source.csv_path, config.source.speed, ids, config.source.channel);
    for (const auto& w : replay->warnings()) spdlog::warn("{}: {}", config.source.csv_path.string(), w);
    return replay;
  }
  return synthetic_stream(sensors, config.source.seed, config.tick_period, config.source.synthetic);
}

}  // namespace thermoviz
