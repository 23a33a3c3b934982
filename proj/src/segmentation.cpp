#include "thermoviz/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

#include "thermoviz/geometry.hpp"

namespace thermoviz {
namespace {

void require_solid(const std::array<Eigen::Vector3d, 4>& v) {
  double edge = 0;
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) edge = std::max(edge, (v[a] - v[b]).norm());
  }
  const double vol = geom::orient3d(v[0], v[1], v[2], v[3]);
  if (!(std::abs(vol) > 1e-12 * edge * edge * edge)) {
    throw InvalidArgument("degenerate tetrahedron");
  }
}

bool all_inside(const std::array<double, 4>& w) {
  return std::all_of(w.begin(), w.end(), [](double x) { return x >= -kBarycentricEps; });
}

// Clip tiny negative boundary weights and renormalize so rows stay convex.
std::array<double, 4> clamp_convex(std::array<double, 4> w) {
  double sum = 0;
  for (auto& x : w) {
    x = std::max(x, 0.0);
    sum += x;
  }
  for (auto& x : w) x /= sum;
  return w;
}

}  // namespace

bool point_in_tetrahedron(const Eigen::Vector3d& p, const Tetrahedron& tet, const SensorSet& sensors) {
  const std::array<Eigen::Vector3d, 4> v{sensors.position(tet.vertices[0]), sensors.position(tet.vertices[1]),
                                         sensors.position(tet.vertices[2]), sensors.position(tet.vertices[3])};
  require_solid(v);
  return all_inside(geom::barycentric(v, p));
}

std::array<double, 4> barycentric_weights(const Eigen::Vector3d& p, const Tetrahedron& tet, const SensorSet& sensors) {
  const std::array<Eigen::Vector3d, 4> v{sensors.position(tet.vertices[0]), sensors.position(tet.vertices[1]),
                                         sensors.position(tet.vertices[2]), sensors.position(tet.vertices[3])};
  require_solid(v);
  const auto w = geom::barycentric(v, p);
  if (!all_inside(w)) throw InvalidArgument("point lies outside the tetrahedron");
  return w;
}

std::vector<std::uint32_t> nearest_sensor_expansion(const ParticleGrid& grid, const SensorSet& sensors) {
  if (sensors.empty()) throw InvalidArgument("nearest-sensor assignment needs at least one sensor");

  const std::size_t n = grid.size();
  const std::size_t m = sensors.size();
  const auto& dims = grid.dims();
  // A sensor keeps growing through a particle while it is within one cell
  // diagonal of the best claim so far. Every Voronoi cell is star-shaped about
  // its site, so the lattice points rounding the segment from the site to any
  // member particle stay inside this slack band and form a 26-connected path.
  const double slack = grid.cell_diagonal() * (1 + 1e-9) + 1e-12;

  std::vector<double> best_d2(n, std::numeric_limits<double>::infinity());
  std::vector<std::uint32_t> best(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<std::vector<bool>> visited(m, std::vector<bool>(n, false));

  struct Front {
    double d2;
    SensorId id;
    std::uint32_t sensor;
    ParticleId particle;
    bool operator>(const Front& o) const { return d2 != o.d2 ? d2 > o.d2 : id > o.id; }
  };
  std::priority_queue<Front, std::vector<Front>, std::greater<>> heap;

  std::vector<Eigen::Vector3d> sites(m);
  for (std::size_t s = 0; s < m; ++s) {
    sites[s] = sensors.position(s);
    const auto c = grid.nearest_coords(sites[s]);
    const ParticleId seed = grid.index(c[0], c[1], c[2]);
    visited[s][seed] = true;
    heap.push({geom::squared_distance<double>(grid.position(seed), sites[s]), sensors[s].id,
               static_cast<std::uint32_t>(s), seed});
  }

  while (!heap.empty()) {
    const Front f = heap.top();
    heap.pop();
    const ParticleId q = f.particle;
    if (best[q] != std::numeric_limits<std::uint32_t>::max() && std::sqrt(f.d2) > std::sqrt(best_d2[q]) + slack) {
      continue;
    }
    if (f.d2 < best_d2[q] || (f.d2 == best_d2[q] && f.id < sensors[best[q]].id)) {
      best_d2[q] = f.d2;
      best[q] = f.sensor;
    }
    const auto [ci, cj, ck] = grid.coords(q);
    auto& seen = visited[f.sensor];
    for (int k = std::max(0, ck - 1); k <= std::min(dims.nz - 1, ck + 1); ++k) {
      for (int j = std::max(0, cj - 1); j <= std::min(dims.ny - 1, cj + 1); ++j) {
        for (int i = std::max(0, ci - 1); i <= std::min(dims.nx - 1, ci + 1); ++i) {
          const ParticleId r = grid.index(i, j, k);
          if (seen[r]) continue;
          seen[r] = true;
          heap.push({geom::squared_distance<double>(grid.position(i, j, k), sites[f.sensor]), f.id, f.sensor, r});
        }
      }
    }
  }
  return best;
}

WeightMap::WeightMap(std::vector<WeightEntry> entries, std::size_t sensor_count)
    : entries_(std::move(entries)), sensor_count_(sensor_count) {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(entries_.size() * 4);
  for (std::size_t p = 0; p < entries_.size(); ++p) {
    const auto& e = entries_[p];
    const int terms = e.kind == WeightEntry::Kind::Inside ? 4 : 1;
    for (int t = 0; t < terms; ++t) {
      if (e.sensors[t] >= sensor_count) throw InvalidArgument("weight map references an unknown sensor");
      triplets.emplace_back(static_cast<int>(p), static_cast<int>(e.sensors[t]), e.weights[t]);
    }
  }
  matrix_.resize(static_cast<Eigen::Index>(entries_.size()), static_cast<Eigen::Index>(sensor_count));
  matrix_.setFromTriplets(triplets.begin(), triplets.end());
}

std::size_t WeightMap::inside_count() const {
  return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [](const WeightEntry& e) {
    return e.kind == WeightEntry::Kind::Inside;
  }));
}

bool WeightMap::references(std::size_t p, std::uint32_t s) const {
  const auto& e = entries_[p];
  if (e.kind == WeightEntry::Kind::Outside) return e.sensors[0] == s;
  for (int t = 0; t < 4; ++t) {
    if (e.sensors[t] == s && e.weights[t] > 0) return true;
  }
  return false;
}

WeightMap locate(const ParticleGrid& grid, const TetraMesh& mesh, const SensorSet& sensors) {
  const std::size_t n = grid.size();
  const auto nearest = nearest_sensor_expansion(grid, sensors);
  std::vector<WeightEntry> entries(n);
  std::vector<char> assigned(n, 0);

  if (!mesh.degenerate) {
    const auto& d = grid.dims();
    const Eigen::Vector3d& h = grid.spacing();
    const double tol = 1e-9 * grid.room().diagonal();
    auto range = [tol](double lo, double hi, double step, int count) {
      const int a = std::max(0, static_cast<int>(std::ceil((lo - tol) / step)));
      const int b = std::min(count - 1, static_cast<int>(std::floor((hi + tol) / step)));
      return std::make_pair(a, b);
    };
    for (std::size_t t = 0; t < mesh.tetrahedra.size(); ++t) {
      const auto& tet = mesh.tetrahedra[t];
      const auto v = mesh.corners(tet, sensors);
      Eigen::Vector3d lo = v[0], hi = v[0];
      for (const auto& c : v) {
        lo = lo.cwiseMin(c);
        hi = hi.cwiseMax(c);
      }
      const auto [i0, i1] = range(lo.x(), hi.x(), h.x(), d.nx);
      const auto [j0, j1] = range(lo.y(), hi.y(), h.y(), d.ny);
      const auto [k0, k1] = range(lo.z(), hi.z(), h.z(), d.nz);
      for (int k = k0; k <= k1; ++k) {
        for (int j = j0; j <= j1; ++j) {
          for (int i = i0; i <= i1; ++i) {
            const ParticleId p = grid.index(i, j, k);
            if (assigned[p]) continue;
            const auto w = geom::barycentric(v, grid.position(i, j, k));
            if (!all_inside(w)) continue;
            auto& e = entries[p];
            e.kind = WeightEntry::Kind::Inside;
            e.tet = static_cast<std::uint32_t>(t);
            for (int c = 0; c < 4; ++c) e.sensors[c] = static_cast<std::uint32_t>(tet.vertices[c]);
            e.weights = clamp_convex(w);
            assigned[p] = 1;
          }
        }
      }
    }
  }

  for (std::size_t p = 0; p < n; ++p) {
    if (assigned[p]) continue;
    auto& e = entries[p];
    e.kind = WeightEntry::Kind::Outside;
    e.sensors = {nearest[p], 0, 0, 0};
    e.weights = {1.0, 0, 0, 0};
  }
  return WeightMap(std::move(entries), sensors.size());
}

Eigen::VectorXd dense_readings(const Readings& readings, const SensorSet& sensors) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(sensors.size()));
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    const auto it = readings.find(sensors[i].id);
    if (it == readings.end()) {
      throw InvalidArgument("missing reading for sensor " + std::to_string(sensors[i].id));
    }
    out[static_cast<Eigen::Index>(i)] = it->second;
  }
  return out;
}

void interpolate(const WeightMap& wm, const Eigen::VectorXd& readings, ParticleGrid& grid) {
  if (static_cast<std::size_t>(readings.size()) != wm.sensor_count()) {
    throw InvalidArgument("reading vector does not match the weight map's sensor count");
  }
  if (wm.size() != grid.size()) throw InvalidArgument("weight map does not match the grid");
  grid.values().noalias() = wm.matrix() * readings;
}

void interpolate(const WeightMap& wm, const Readings& readings, const SensorSet& sensors, ParticleGrid& grid) {
  interpolate(wm, dense_readings(readings, sensors), grid);
}

}  // namespace thermoviz
