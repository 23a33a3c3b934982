#include "thermoviz/lod.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "thermoviz/geometry.hpp"

namespace thermoviz {

void BandConfig::validate() const {
  const std::size_t n = thresholds.size();
  if (n == 0) throw InvalidArgument("band configuration needs at least one band");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(thresholds[i] > thresholds[i - 1])) throw InvalidArgument("band thresholds must strictly increase");
  }
  if (cluster_factors.size() != n || neighbor_depths.size() != n || targets.size() != n) {
    throw InvalidArgument("band configuration needs one factor, depth and target per band");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (cluster_factors[i] < 1) throw InvalidArgument("cluster factors must be >= 1");
    if (neighbor_depths[i] < 0) throw InvalidArgument("neighbor depths must be >= 0");
    if (targets[i] < 1) throw InvalidArgument("resolution targets must be >= 1");
  }
}

std::string_view to_string(LodKind kind) {
  switch (kind) {
    case LodKind::Cluster:
      return "cluster";
    case LodKind::Significant:
      return "significant";
    case LodKind::Resolution:
      return "resolution";
  }
  return "resolution";
}

LodKind parse_lod_kind(std::string_view name) {
  if (name == "cluster") return LodKind::Cluster;
  if (name == "significant") return LodKind::Significant;
  if (name == "resolution") return LodKind::Resolution;
  throw InvalidArgument("unknown LOD kind '" + std::string(name) + "'");
}

LodLevel cluster_grid(const ParticleGrid& grid, int factor) {
  if (factor < 1) throw InvalidArgument("cluster factor must be >= 1");
  const auto& d = grid.dims();
  const int cx = (d.nx + factor - 1) / factor;
  const int cy = (d.ny + factor - 1) / factor;
  const int cz = (d.nz + factor - 1) / factor;
  const Eigen::Index cells = static_cast<Eigen::Index>(cx) * cy * cz;

  Eigen::Matrix3Xd pos_sum = Eigen::Matrix3Xd::Zero(3, cells);
  Eigen::VectorXd value_sum = Eigen::VectorXd::Zero(cells);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(cells);
  const auto& values = grid.values();
  for (int k = 0; k < d.nz; ++k) {
    for (int j = 0; j < d.ny; ++j) {
      for (int i = 0; i < d.nx; ++i) {
        const Eigen::Index c = (i / factor) + cx * ((j / factor) + static_cast<Eigen::Index>(cy) * (k / factor));
        pos_sum.col(c) += grid.position(i, j, k);
        value_sum[c] += values[grid.index(i, j, k)];
        count[c] += 1;
      }
    }
  }

  LodLevel level;
  level.kind = LodKind::Cluster;
  level.positions = pos_sum.array().rowwise() / count.transpose().array();
  level.values = value_sum.cwiseQuotient(count);
  return level;
}

LodLevel significant_vertices(const ParticleGrid& grid, const SensorSet& sensors, int depth, Extremum mode) {
  LodLevel level;
  level.kind = LodKind::Significant;
  std::vector<ParticleId> kept;
  const std::size_t n = grid.size();

  if (depth <= 0) {
    kept.resize(n);
    std::iota(kept.begin(), kept.end(), ParticleId{0});
  } else {
    const auto& d = grid.dims();
    const auto& v = grid.values();
    const bool want_high = mode != Extremum::Low;
    const bool want_low = mode != Extremum::High;
    for (ParticleId p = 0; p < n; ++p) {
      const double center = v[p];
      bool is_max = want_high, is_min = want_low;
      const auto [ci, cj, ck] = grid.coords(p);
      for (int k = std::max(0, ck - depth); k <= std::min(d.nz - 1, ck + depth) && (is_max || is_min); ++k) {
        for (int j = std::max(0, cj - depth); j <= std::min(d.ny - 1, cj + depth) && (is_max || is_min); ++j) {
          for (int i = std::max(0, ci - depth); i <= std::min(d.nx - 1, ci + depth); ++i) {
            const ParticleId q = grid.index(i, j, k);
            if (q == p) continue;
            if (v[q] >= center) is_max = false;
            if (v[q] <= center) is_min = false;
            if (!is_max && !is_min) break;
          }
        }
      }
      if (is_max || is_min) kept.push_back(p);
    }
    if (kept.empty()) {
      for (std::size_t s = 0; s < sensors.size(); ++s) {
        const auto c = grid.nearest_coords(sensors.position(s));
        kept.push_back(grid.index(c[0], c[1], c[2]));
      }
      std::sort(kept.begin(), kept.end());
      kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
    }
  }

  level.positions.resize(3, static_cast<Eigen::Index>(kept.size()));
  level.values.resize(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    level.positions.col(static_cast<Eigen::Index>(i)) = grid.position(kept[i]);
    level.values[static_cast<Eigen::Index>(i)] = grid.values()[kept[i]];
  }
  level.source_ids = std::move(kept);
  return level;
}

int select_band(const Eigen::Vector3d& viewpoint, const Eigen::Vector3d& target, const BandConfig& bands) {
  const double distance = (viewpoint - target).norm();
  for (std::size_t i = 0; i < bands.thresholds.size(); ++i) {
    if (distance < bands.thresholds[i]) return static_cast<int>(i);
  }
  return static_cast<int>(bands.thresholds.size()) - 1;
}

std::vector<ParticleId> stride_ids(std::size_t n, std::size_t target) {
  if (target > n) throw InvalidArgument("cannot select more ids than available");
  std::vector<ParticleId> ids(target);
  for (std::size_t k = 0; k < target; ++k) {
    ids[k] = static_cast<ParticleId>(static_cast<std::uint64_t>(k) * n / target);
  }
  return ids;
}

Resolver::Resolver(const ParticleGrid& base, const SensorSet& sensors, const TetraMesh& mesh, BandConfig bands)
    : bands_(std::move(bands)) {
  bands_.validate();
  for (std::size_t b = 0; b < bands_.count(); ++b) {
    const std::size_t target = bands_.targets[b];
    if (target <= base.size()) continue;
    GridDims dims = base.dims();
    while (dims.count() < target) {
      dims.nx *= 2;
      dims.ny *= 2;
    }
    ParticleGrid dense(base.room(), dims, 0.0);
    WeightMap weights = locate(dense, mesh, sensors);
    auto ids = stride_ids(dense.size(), target);
    Eigen::Matrix3Xd positions(3, static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) positions.col(static_cast<Eigen::Index>(i)) = dense.position(ids[i]);
    dense_.emplace(static_cast<int>(b), Dense{std::move(dense), std::move(weights), std::move(ids), std::move(positions)});
  }
}

LodLevel Resolver::reresolve(const ParticleGrid& grid, const Eigen::VectorXd& readings, int band) const {
  if (band < 0 || static_cast<std::size_t>(band) >= bands_.count()) throw InvalidArgument("invalid band index");
  LodLevel level;
  level.band = band;
  level.kind = LodKind::Resolution;

  if (const auto it = dense_.find(band); it != dense_.end()) {
    const Dense& dense = it->second;
    const Eigen::VectorXd values = dense.weights.matrix() * readings;
    level.positions = dense.positions;
    level.values.resize(static_cast<Eigen::Index>(dense.ids.size()));
    for (std::size_t i = 0; i < dense.ids.size(); ++i) level.values[static_cast<Eigen::Index>(i)] = values[dense.ids[i]];
    return level;
  }

  auto ids = stride_ids(grid.size(), bands_.targets[static_cast<std::size_t>(band)]);
  level.positions.resize(3, static_cast<Eigen::Index>(ids.size()));
  level.values.resize(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    level.positions.col(static_cast<Eigen::Index>(i)) = grid.position(ids[i]);
    level.values[static_cast<Eigen::Index>(i)] = grid.values()[ids[i]];
  }
  level.source_ids = std::move(ids);
  return level;
}

LodLevel reresolve(const ParticleGrid& grid, const SensorSet& sensors, const TetraMesh& mesh,
                   const Eigen::VectorXd& readings, int band, const BandConfig& bands) {
  return Resolver(grid, sensors, mesh, bands).reresolve(grid, readings, band);
}

namespace {

DiffusionSchedule rank_into_waves(std::vector<double> distance, std::size_t waves) {
  const std::size_t n = distance.size();
  if (waves < 1) throw InvalidArgument("diffusion needs at least one wave");
  if (waves > n) throw InvalidArgument("more diffusion waves than particles");

  DiffusionSchedule schedule;
  schedule.distance = std::move(distance);
  std::vector<ParticleId> order(n);
  std::iota(order.begin(), order.end(), ParticleId{0});
  const auto& d = schedule.distance;
  std::sort(order.begin(), order.end(), [&](ParticleId a, ParticleId b) { return d[a] != d[b] ? d[a] < d[b] : a < b; });

  schedule.waves.resize(waves);
  schedule.wave_of.resize(n);
  const std::size_t base = n / waves;
  const std::size_t extra = n % waves;
  std::size_t offset = 0;
  for (std::size_t w = 0; w < waves; ++w) {
    const std::size_t size = base + (w < extra ? 1 : 0);
    auto& wave = schedule.waves[w];
    wave.assign(order.begin() + static_cast<std::ptrdiff_t>(offset),
                order.begin() + static_cast<std::ptrdiff_t>(offset + size));
    std::sort(wave.begin(), wave.end());
    for (ParticleId p : wave) schedule.wave_of[p] = static_cast<std::uint32_t>(w);
    offset += size;
  }
  return schedule;
}

}  // namespace

DiffusionSchedule diffusion_schedule(const ParticleGrid& grid, const SensorSet& sensors, std::size_t waves) {
  const std::size_t n = grid.size();
  if (waves < 1) throw InvalidArgument("diffusion needs at least one wave");
  if (waves > n) throw InvalidArgument("more diffusion waves than particles");
  const auto nearest = nearest_sensor_expansion(grid, sensors);
  std::vector<double> distance(n);
  for (ParticleId p = 0; p < n; ++p) {
    distance[p] = std::sqrt(geom::squared_distance<double>(grid.position(p), sensors.position(nearest[p])));
  }
  return rank_into_waves(std::move(distance), waves);
}

DiffusionSchedule diffusion_schedule(const Eigen::Matrix3Xd& positions, const SensorSet& sensors, std::size_t waves) {
  if (sensors.empty()) throw InvalidArgument("diffusion needs at least one sensor");
  std::vector<double> distance(static_cast<std::size_t>(positions.cols()));
  for (Eigen::Index i = 0; i < positions.cols(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < sensors.size(); ++s) {
      best = std::min(best, geom::squared_distance<double>(positions.col(i), sensors.position(s)));
    }
    distance[static_cast<std::size_t>(i)] = std::sqrt(best);
  }
  return rank_into_waves(std::move(distance), waves);
}

DiffusionSchedule restrict_schedule(const DiffusionSchedule& base, const std::vector<ParticleId>& ids) {
  DiffusionSchedule out;
  out.waves.resize(base.wave_count());
  out.wave_of.resize(ids.size());
  out.distance.resize(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= base.wave_of.size()) throw InvalidArgument("subset id outside the scheduled grid");
    const auto w = base.wave_of[ids[i]];
    out.wave_of[i] = w;
    out.distance[i] = base.distance[ids[i]];
    out.waves[w].push_back(static_cast<ParticleId>(i));
  }
  return out;
}

std::vector<ValueUpdate> next_wave(const DiffusionSchedule& schedule, std::size_t cursor,
                                   const Eigen::VectorXd& values, const std::vector<float>& last_sent,
                                   double epsilon) {
  if (cursor >= schedule.wave_count()) throw InvalidArgument("diffusion cursor out of range");
  if (static_cast<std::size_t>(values.size()) != schedule.wave_of.size() || last_sent.size() != schedule.wave_of.size()) {
    throw InvalidArgument("value arrays do not match the diffusion schedule");
  }
  std::vector<ValueUpdate> out;
  for (ParticleId p : schedule.waves[cursor]) {
    const auto v = static_cast<float>(values[p]);
    if (needs_send(v, last_sent[p], epsilon)) out.push_back({p, v});
  }
  return out;
}

}  // namespace thermoviz
