#include <algorithm>
#include <array>
#include <map>
#include <utility>

#include "thermoviz/geometry.hpp"
#include "thermoviz/predicates.hpp"
#include "thermoviz/segmentation.hpp"

namespace thermoviz {
namespace {

// Face opposite local vertex i, ordered so that orient3d(face, v_i) > 0 for a
// positively oriented cell.
constexpr int kFace[4][3] = {{1, 3, 2}, {0, 2, 3}, {0, 3, 1}, {0, 1, 2}};

struct Cell {
  std::array<int, 4> v;
  std::array<int, 4> n{-1, -1, -1, -1};  // neighbor across the face opposite v[i]
  bool alive = true;
};

class BowyerWatson {
 public:
  explicit BowyerWatson(std::vector<Eigen::Vector3d> points) : pts_(std::move(points)), real_count_(pts_.size()) {
    Eigen::Vector3d lo = pts_.front(), hi = pts_.front();
    for (const auto& p : pts_) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Eigen::Vector3d c = (lo + hi) / 2;
    const double s = 1e5 * std::max(1.0, (hi - lo).maxCoeff());
    const int base = static_cast<int>(pts_.size());
    pts_.push_back(c + s * Eigen::Vector3d(1, 1, 1));
    pts_.push_back(c + s * Eigen::Vector3d(1, -1, -1));
    pts_.push_back(c + s * Eigen::Vector3d(-1, 1, -1));
    pts_.push_back(c + s * Eigen::Vector3d(-1, -1, 1));
    Cell root{{base, base + 1, base + 2, base + 3}};
    if (orient(root.v[0], root.v[1], root.v[2], root.v[3]) < 0) std::swap(root.v[2], root.v[3]);
    cells_.push_back(root);
  }

  void run() {
    for (std::size_t p = 0; p < real_count_; ++p) insert(static_cast<int>(p));
  }

  std::vector<std::array<int, 4>> real_cells() const {
    std::vector<std::array<int, 4>> out;
    for (const auto& c : cells_) {
      if (!c.alive) continue;
      const bool real = std::all_of(c.v.begin(), c.v.end(), [&](int v) { return v < static_cast<int>(real_count_); });
      if (real) out.push_back(c.v);
    }
    return out;
  }

 private:
  int orient(int a, int b, int c, int d) const { return geom::orient3d_sign(pts_[a], pts_[b], pts_[c], pts_[d]); }

  int face_orient(const Cell& c, int i, int p) const {
    return orient(c.v[kFace[i][0]], c.v[kFace[i][1]], c.v[kFace[i][2]], p);
  }

  bool conflicts(const Cell& c, int p) const {
    return geom::insphere_sign(pts_[c.v[0]], pts_[c.v[1]], pts_[c.v[2]], pts_[c.v[3]], pts_[p]) > 0;
  }

  int locate(int p) const {
    for (std::size_t ci = 0; ci < cells_.size(); ++ci) {
      const auto& c = cells_[ci];
      if (!c.alive) continue;
      bool inside = true;
      for (int i = 0; i < 4 && inside; ++i) inside = face_orient(c, i, p) >= 0;
      if (inside) return static_cast<int>(ci);
    }
    throw std::logic_error("point outside the bounding tetrahedron");
  }

  void insert(int p) {
    std::vector<char> in_cavity(cells_.size(), 0);
    std::vector<int> cavity;
    const int seed = locate(p);
    in_cavity[seed] = 1;
    cavity.push_back(seed);
    for (std::size_t q = 0; q < cavity.size(); ++q) {
      for (int nb : cells_[cavity[q]].n) {
        if (nb >= 0 && !in_cavity[nb] && conflicts(cells_[nb], p)) {
          in_cavity[nb] = 1;
          cavity.push_back(nb);
        }
      }
    }

    // Cospherical input can leave boundary faces that p sees edge-on or from
    // behind; absorb the cell across such a face until the cavity is star-shaped.
    std::vector<std::pair<int, int>> boundary;
    for (bool grew = true; grew;) {
      grew = false;
      boundary.clear();
      for (std::size_t q = 0; q < cavity.size() && !grew; ++q) {
        const int ci = cavity[q];
        for (int i = 0; i < 4; ++i) {
          const int nb = cells_[ci].n[i];
          if (nb >= 0 && in_cavity[nb]) continue;
          if (face_orient(cells_[ci], i, p) <= 0) {
            if (nb < 0) throw std::logic_error("cavity reached the bounding tetrahedron hull");
            in_cavity[nb] = 1;
            cavity.push_back(nb);
            grew = true;
            break;
          }
          boundary.emplace_back(ci, i);
        }
      }
    }

    std::map<std::pair<int, int>, std::pair<int, int>> open_edges;
    auto link = [&](int a, int b, int cell, int local) {
      const auto key = std::minmax(a, b);
      auto it = open_edges.find(key);
      if (it == open_edges.end()) {
        open_edges.emplace(key, std::make_pair(cell, local));
      } else {
        cells_[cell].n[local] = it->second.first;
        cells_[it->second.first].n[it->second.second] = cell;
        open_edges.erase(it);
      }
    };

    for (const auto& [ci, i] : boundary) {
      const Cell old = cells_[ci];
      const int f0 = old.v[kFace[i][0]], f1 = old.v[kFace[i][1]], f2 = old.v[kFace[i][2]];
      const int outer = old.n[i];
      const int nc = static_cast<int>(cells_.size());
      Cell cell{{f0, f1, f2, p}};
      cell.n[3] = outer;
      cells_.push_back(cell);
      if (outer >= 0) {
        for (auto& back : cells_[outer].n) {
          if (back == ci) back = nc;
        }
      }
      link(f1, f2, nc, 0);
      link(f0, f2, nc, 1);
      link(f0, f1, nc, 2);
    }
    for (int ci : cavity) cells_[ci].alive = false;
  }

  std::vector<Eigen::Vector3d> pts_;
  std::size_t real_count_;
  std::vector<Cell> cells_;
};

}  // namespace

TetraMesh tetrahedralize(const SensorSet& sensors) {
  const std::size_t m = sensors.size();
  if (m < 4) throw DegenerateInput("tetrahedralization needs at least 4 sensors");

  std::vector<Eigen::Vector3d> pts;
  pts.reserve(m);
  for (std::size_t i = 0; i < m; ++i) pts.push_back(sensors.position(i));

  bool solid = false;
  for (std::size_t c = 2; c < m && !solid; ++c) {
    for (std::size_t d = c + 1; d < m && !solid; ++d) {
      solid = geom::orient3d_sign(pts[0], pts[1], pts[c], pts[d]) != 0;
    }
  }
  // p0, p1 may be collinear with every c; retry with other base pairs.
  for (std::size_t b = 2; b < m && !solid; ++b) {
    for (std::size_t c = b + 1; c < m && !solid; ++c) {
      for (std::size_t d = c + 1; d < m && !solid; ++d) {
        solid = geom::orient3d_sign(pts[0], pts[b], pts[c], pts[d]) != 0;
      }
    }
  }
  if (!solid) throw DegenerateInput("sensor positions are coplanar");

  BowyerWatson bw(pts);
  bw.run();

  TetraMesh mesh;
  for (const auto& v : bw.real_cells()) {
    Tetrahedron t;
    for (int i = 0; i < 4; ++i) t.vertices[i] = static_cast<std::size_t>(v[i]);
    const auto sphere = geom::circumsphere<double>({pts[v[0]], pts[v[1]], pts[v[2]], pts[v[3]]});
    t.circumcenter = sphere.center;
    t.circumradius = sphere.radius;
    mesh.tetrahedra.push_back(t);
  }
  return mesh;
}

}  // namespace thermoviz
