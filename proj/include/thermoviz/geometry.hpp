#pragma once

#include <array>
#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

namespace thermoviz::geom {

template <typename Scalar>
using Point3 = Eigen::Matrix<Scalar, 3, 1>;

/// det[b - a, c - a, d - a]; six times the signed volume of tetrahedron abcd.
/// Positive for the right-handed unit simplex (0,0,0),(1,0,0),(0,1,0),(0,0,1).
template <typename Derived>
typename Derived::Scalar orient3d(const Eigen::MatrixBase<Derived>& a, const Eigen::MatrixBase<Derived>& b,
                                  const Eigen::MatrixBase<Derived>& c, const Eigen::MatrixBase<Derived>& d) {
  const auto ab = (b - a).eval();
  const auto ac = (c - a).eval();
  const auto ad = (d - a).eval();
  return ab.dot(ac.cross(ad));
}

template <typename Scalar>
Scalar signed_volume(const Point3<Scalar>& a, const Point3<Scalar>& b, const Point3<Scalar>& c,
                     const Point3<Scalar>& d) {
  return orient3d(a, b, c, d) / Scalar(6);
}

/// Barycentric coordinates of p in tetrahedron (v0..v3) as volume ratios:
/// w_i = vol(tet with v_i replaced by p) / vol(tet). The weights sum to one.
template <typename Scalar>
std::array<Scalar, 4> barycentric(const std::array<Point3<Scalar>, 4>& v, const Point3<Scalar>& p) {
  const Scalar total = orient3d(v[0], v[1], v[2], v[3]);
  std::array<Scalar, 4> w{orient3d(p, v[1], v[2], v[3]) / total, orient3d(v[0], p, v[2], v[3]) / total,
                          orient3d(v[0], v[1], p, v[3]) / total, orient3d(v[0], v[1], v[2], p) / total};
  return w;
}

template <typename Scalar>
struct Sphere {
  Point3<Scalar> center;
  Scalar radius;
};

/// Circumsphere of a non-degenerate tetrahedron.
template <typename Scalar>
Sphere<Scalar> circumsphere(const std::array<Point3<Scalar>, 4>& v) {
  Eigen::Matrix<Scalar, 3, 3> rows;
  rows.row(0) = (v[1] - v[0]).transpose();
  rows.row(1) = (v[2] - v[0]).transpose();
  rows.row(2) = (v[3] - v[0]).transpose();
  const Point3<Scalar> rhs(rows.row(0).squaredNorm() / 2, rows.row(1).squaredNorm() / 2,
                           rows.row(2).squaredNorm() / 2);
  const Point3<Scalar> offset = rows.partialPivLu().solve(rhs);
  return {v[0] + offset, offset.norm()};
}

/// Squared distance with a fixed summation order, so that every caller comparing
/// distances (expansion, scans, schedules) sees bit-identical values.
template <typename Scalar>
inline Scalar squared_distance(const Point3<Scalar>& a, const Point3<Scalar>& b) {
  const Scalar dx = a.x() - b.x();
  const Scalar dy = a.y() - b.y();
  const Scalar dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace thermoviz::geom
