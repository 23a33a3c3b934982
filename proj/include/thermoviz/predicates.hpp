#pragma once

#include <Eigen/Core>

namespace thermoviz::geom {

// Exact-sign geometric predicates on double inputs. A floating-point filter
// answers most queries; ambiguous ones are re-evaluated in exact rationals.

/// Sign of det[b - a, c - a, d - a].
int orient3d_sign(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                  const Eigen::Vector3d& d);

/// +1 when e lies strictly inside the circumsphere of tetrahedron abcd, -1 when
/// strictly outside, 0 when on it. Independent of the orientation of abcd, which
/// must be non-degenerate.
int insphere_sign(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                  const Eigen::Vector3d& d, const Eigen::Vector3d& e);

}  // namespace thermoviz::geom
