#include "thermoviz/predicates.hpp"

#include <array>
#include <cmath>
#include <limits>

#include <boost/multiprecision/cpp_int.hpp>

namespace thermoviz::geom {
namespace {

using Rational = boost::multiprecision::cpp_rational;

constexpr double kEps = std::numeric_limits<double>::epsilon() / 2;  // 2^-53
// Static filter bounds in the style of Shewchuk's orient3d/insphere, doubled for margin.
constexpr double kOrientBound = 2 * (7.0 + 56.0 * kEps) * kEps;
constexpr double kInsphereBound = 2 * (16.0 + 224.0 * kEps) * kEps;

template <typename T>
int sign_of(const T& v) {
  return v > 0 ? 1 : (v < 0 ? -1 : 0);
}

// det[a - d, b - d, c - d]
template <typename T>
T orient_det(const T& adx, const T& ady, const T& adz, const T& bdx, const T& bdy, const T& bdz, const T& cdx,
             const T& cdy, const T& cdz) {
  return adz * (bdx * cdy - cdx * bdy) + bdz * (cdx * ady - adx * cdy) + cdz * (adx * bdy - bdx * ady);
}

int orient_exact(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                 const Eigen::Vector3d& d) {
  const Rational dx(d.x()), dy(d.y()), dz(d.z());
  const Rational adx = Rational(a.x()) - dx, ady = Rational(a.y()) - dy, adz = Rational(a.z()) - dz;
  const Rational bdx = Rational(b.x()) - dx, bdy = Rational(b.y()) - dy, bdz = Rational(b.z()) - dz;
  const Rational cdx = Rational(c.x()) - dx, cdy = Rational(c.y()) - dy, cdz = Rational(c.z()) - dz;
  return sign_of(orient_det(adx, ady, adz, bdx, bdy, bdz, cdx, cdy, cdz));
}

// Sign of det[a - d, b - d, c - d].
int orient_raw(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
               const Eigen::Vector3d& d) {
  const double adx = a.x() - d.x(), ady = a.y() - d.y(), adz = a.z() - d.z();
  const double bdx = b.x() - d.x(), bdy = b.y() - d.y(), bdz = b.z() - d.z();
  const double cdx = c.x() - d.x(), cdy = c.y() - d.y(), cdz = c.z() - d.z();

  const double det = orient_det(adx, ady, adz, bdx, bdy, bdz, cdx, cdy, cdz);
  const double permanent = (std::abs(bdx * cdy) + std::abs(cdx * bdy)) * std::abs(adz) +
                           (std::abs(cdx * ady) + std::abs(adx * cdy)) * std::abs(bdz) +
                           (std::abs(adx * bdy) + std::abs(bdx * ady)) * std::abs(cdz);
  const double bound = kOrientBound * permanent;
  if (det > bound || -det > bound) return sign_of(det);
  return orient_exact(a, b, c, d);
}

template <typename T>
T insphere_det(const T& aex, const T& aey, const T& aez, const T& bex, const T& bey, const T& bez, const T& cex,
               const T& cey, const T& cez, const T& dex, const T& dey, const T& dez) {
  const T ab = aex * bey - bex * aey;
  const T bc = bex * cey - cex * bey;
  const T cd = cex * dey - dex * cey;
  const T da = dex * aey - aex * dey;
  const T ac = aex * cey - cex * aey;
  const T bd = bex * dey - dex * bey;

  const T abc = aez * bc - bez * ac + cez * ab;
  const T bcd = bez * cd - cez * bd + dez * bc;
  const T cda = cez * da + dez * ac + aez * cd;
  const T dab = dez * ab + aez * bd + bez * da;

  const T alift = aex * aex + aey * aey + aez * aez;
  const T blift = bex * bex + bey * bey + bez * bez;
  const T clift = cex * cex + cey * cey + cez * cez;
  const T dlift = dex * dex + dey * dey + dez * dez;

  return (dlift * abc - clift * dab) + (blift * cda - alift * bcd);
}

int insphere_exact(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                   const Eigen::Vector3d& d, const Eigen::Vector3d& e) {
  const Rational ex(e.x()), ey(e.y()), ez(e.z());
  auto rel = [&](const Eigen::Vector3d& p) {
    return std::array<Rational, 3>{Rational(p.x()) - ex, Rational(p.y()) - ey, Rational(p.z()) - ez};
  };
  const auto ra = rel(a), rb = rel(b), rc = rel(c), rd = rel(d);
  return sign_of(insphere_det(ra[0], ra[1], ra[2], rb[0], rb[1], rb[2], rc[0], rc[1], rc[2], rd[0], rd[1], rd[2]));
}

// Positive when e is inside the sphere and det[a-d, b-d, c-d] > 0.
int insphere_raw(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                 const Eigen::Vector3d& d, const Eigen::Vector3d& e) {
  const double aex = a.x() - e.x(), aey = a.y() - e.y(), aez = a.z() - e.z();
  const double bex = b.x() - e.x(), bey = b.y() - e.y(), bez = b.z() - e.z();
  const double cex = c.x() - e.x(), cey = c.y() - e.y(), cez = c.z() - e.z();
  const double dex = d.x() - e.x(), dey = d.y() - e.y(), dez = d.z() - e.z();

  const double det = insphere_det(aex, aey, aez, bex, bey, bez, cex, cey, cez, dex, dey, dez);

  const double aexbey = std::abs(aex * bey), bexaey = std::abs(bex * aey);
  const double bexcey = std::abs(bex * cey), cexbey = std::abs(cex * bey);
  const double cexdey = std::abs(cex * dey), dexcey = std::abs(dex * cey);
  const double dexaey = std::abs(dex * aey), aexdey = std::abs(aex * dey);
  const double aexcey = std::abs(aex * cey), cexaey = std::abs(cex * aey);
  const double bexdey = std::abs(bex * dey), dexbey = std::abs(dex * bey);
  const double aezp = std::abs(aez), bezp = std::abs(bez), cezp = std::abs(cez), dezp = std::abs(dez);
  const double alift = aex * aex + aey * aey + aez * aez;
  const double blift = bex * bex + bey * bey + bez * bez;
  const double clift = cex * cex + cey * cey + cez * cez;
  const double dlift = dex * dex + dey * dey + dez * dez;

  const double permanent =
      ((cexdey + dexcey) * bezp + (dexbey + bexdey) * cezp + (bexcey + cexbey) * dezp) * alift +
      ((dexaey + aexdey) * cezp + (aexcey + cexaey) * dezp + (cexdey + dexcey) * aezp) * blift +
      ((aexbey + bexaey) * dezp + (bexdey + dexbey) * aezp + (dexaey + aexdey) * bezp) * clift +
      ((bexcey + cexbey) * aezp + (cexaey + aexcey) * bezp + (aexbey + bexaey) * cezp) * dlift;
  const double bound = kInsphereBound * permanent;
  if (det > bound || -det > bound) return sign_of(det);
  return insphere_exact(a, b, c, d, e);
}

}  // namespace

int orient3d_sign(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                  const Eigen::Vector3d& d) {
  // det[b-a, c-a, d-a] = -det[a-d, b-d, c-d]
  return -orient_raw(a, b, c, d);
}

int insphere_sign(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                  const Eigen::Vector3d& d, const Eigen::Vector3d& e) {
  return insphere_raw(a, b, c, d, e) * orient_raw(a, b, c, d);
}

}  // namespace thermoviz::geom
