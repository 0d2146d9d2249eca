#include "skelbridge/shapes/primitives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace skelbridge::shapes {

namespace {

constexpr double kPi = 3.14159265358979323846;

// stable orthonormal pair perpendicular to a unit axis
void perpendicular_frame(const Vec3& axis, Vec3& e1, Vec3& e2) {
  const Vec3 pick = std::abs(axis.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
  e1 = axis.cross(pick).normalized();
  e2 = axis.cross(e1);
}

Vec3 uniform_sphere(Rng& rng) {
  const double z = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * kPi);
  const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
  return Vec3(s * std::cos(phi), s * std::sin(phi), z);
}

}  // namespace

SweptPrimitive SweptPrimitive::capsule(const Vec3& a, const Vec3& b, double r) {
  SweptPrimitive p;
  p.kind = Kind::kCapsule;
  p.a = a;
  p.b = b;
  p.r = r;
  p.validate();
  return p;
}

SweptPrimitive SweptPrimitive::plate(const Vec3& center, const Vec3& u, const Vec3& v,
                                     double r) {
  SweptPrimitive p;
  p.kind = Kind::kPlate;
  p.center = center;
  p.u = u;
  p.v = v;
  p.r = r;
  p.validate();
  return p;
}

void SweptPrimitive::validate() const {
  if (!(r > 0.0)) throw InvalidInputError("primitive radius must be positive");
  if (kind == Kind::kPlate) {
    if (u.norm() < 1e-12 || v.norm() < 1e-12)
      throw InvalidInputError("plate extent vectors must be nonzero");
    if (std::abs(u.dot(v)) > 1e-9 * u.norm() * v.norm())
      throw InvalidInputError("plate extent vectors must be orthogonal");
  }
}

Vec3 SweptPrimitive::core_closest(const Vec3& x) const {
  if (kind == Kind::kCapsule) {
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 < 1e-24) return a;
    const double t = std::clamp((x - a).dot(ab) / len2, 0.0, 1.0);
    return a + t * ab;
  }
  const double lu = u.norm();
  const double lv = v.norm();
  const Vec3 uhat = u / lu;
  const Vec3 vhat = v / lv;
  const Vec3 d = x - center;
  const double su = std::clamp(d.dot(uhat), -lu, lu);
  const double sv = std::clamp(d.dot(vhat), -lv, lv);
  return center + su * uhat + sv * vhat;
}

double SweptPrimitive::core_distance(const Vec3& x) const {
  return (x - core_closest(x)).norm();
}

double SweptPrimitive::core_measure() const {
  if (kind == Kind::kCapsule) return (b - a).norm();
  return 4.0 * u.norm() * v.norm();
}

double SweptPrimitive::surface_area() const {
  if (kind == Kind::kCapsule) return 2.0 * kPi * r * (b - a).norm() + 4.0 * kPi * r * r;
  const double lu = u.norm();
  const double lv = v.norm();
  return 8.0 * lu * lv + 4.0 * kPi * r * (lu + lv) + 4.0 * kPi * r * r;
}

void SweptPrimitive::bounds(Vec3& lo, Vec3& hi) const {
  if (kind == Kind::kCapsule) {
    lo = a.cwiseMin(b) - Vec3::Constant(r);
    hi = a.cwiseMax(b) + Vec3::Constant(r);
    return;
  }
  lo = hi = center;
  for (int su : {-1, 1}) {
    for (int sv : {-1, 1}) {
      const Vec3 corner = center + su * u + sv * v;
      lo = lo.cwiseMin(corner);
      hi = hi.cwiseMax(corner);
    }
  }
  lo.array() -= r;
  hi.array() += r;
}

void SweptPrimitive::sample_surface_point(Rng& rng, Vec3& point, Vec3& normal) const {
  if (kind == Kind::kCapsule) {
    const Vec3 ab = b - a;
    const double len = ab.norm();
    const double area_cyl = 2.0 * kPi * r * len;
    const double area_caps = 4.0 * kPi * r * r;
    if (rng.uniform() * (area_cyl + area_caps) < area_cyl && len > 0.0) {
      const Vec3 axis = ab / len;
      Vec3 e1, e2;
      perpendicular_frame(axis, e1, e2);
      const double t = rng.uniform();
      const double phi = rng.uniform(0.0, 2.0 * kPi);
      normal = std::cos(phi) * e1 + std::sin(phi) * e2;
      point = a + t * ab + r * normal;
    } else {
      const Vec3 w = uniform_sphere(rng);
      const Vec3 end = (len > 0.0 && w.dot(ab) > 0.0) ? b : a;
      normal = w;
      point = end + r * w;
    }
    return;
  }

  const double lu = u.norm();
  const double lv = v.norm();
  const Vec3 uhat = u / lu;
  const Vec3 vhat = v / lv;
  const Vec3 nhat = uhat.cross(vhat);
  const double area_faces = 8.0 * lu * lv;
  const double area_edges = 4.0 * kPi * r * (lu + lv);
  const double area_corners = 4.0 * kPi * r * r;
  double pick = rng.uniform() * (area_faces + area_edges + area_corners);
  if (pick < area_faces) {
    const double su = rng.uniform(-lu, lu);
    const double sv = rng.uniform(-lv, lv);
    const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
    normal = side * nhat;
    point = center + su * uhat + sv * vhat + r * normal;
    return;
  }
  pick -= area_faces;
  if (pick < area_edges) {
    // pick an edge pair by length, then a side
    const bool along_u = rng.uniform() * (lu + lv) < lu;
    const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
    const double theta = rng.uniform(-0.5 * kPi, 0.5 * kPi);
    const Vec3 out = along_u ? (side * vhat).eval() : (side * uhat).eval();
    const Vec3 core = along_u
                          ? (center + rng.uniform(-lu, lu) * uhat + side * lv * vhat).eval()
                          : (center + rng.uniform(-lv, lv) * vhat + side * lu * uhat).eval();
    normal = std::cos(theta) * out + std::sin(theta) * nhat;
    point = core + r * normal;
    return;
  }
  // corners: route a uniform sphere direction to the matching corner
  const Vec3 w = uniform_sphere(rng);
  const double su = w.dot(uhat) >= 0.0 ? 1.0 : -1.0;
  const double sv = w.dot(vhat) >= 0.0 ? 1.0 : -1.0;
  const Vec3 core = center + su * lu * uhat + sv * lv * vhat;
  normal = w;
  point = core + r * w;
}

Vec3 SweptPrimitive::sample_core_point(Rng& rng) const {
  if (kind == Kind::kCapsule) return a + rng.uniform() * (b - a);
  return center + rng.uniform(-1.0, 1.0) * u + rng.uniform(-1.0, 1.0) * v;
}

SweptPrimitive SweptPrimitive::transformed(double scale, const Vec3& t) const {
  SweptPrimitive out = *this;
  out.a = scale * a + t;
  out.b = scale * b + t;
  out.center = scale * center + t;
  out.u = scale * u;
  out.v = scale * v;
  out.r = scale * r;
  return out;
}

std::vector<int> apportion_counts(const std::vector<double>& weights, int total) {
  const std::size_t n = weights.size();
  if (n == 0) throw InvalidInputError("apportion_counts: no weights");
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw InvalidInputError("apportion_counts: negative weight");
    wsum += w;
  }
  std::vector<int> counts(n, 0);
  if (total <= 0) return counts;
  if (wsum <= 0.0) {  // all-zero weights: spread evenly from the front
    for (int i = 0; i < total; ++i) counts[i % n] += 1;
    return counts;
  }
  std::vector<double> frac(n);
  int assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double share = total * weights[i] / wsum;
    counts[i] = static_cast<int>(std::floor(share));
    frac[i] = share - counts[i];
    assigned += counts[i];
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return frac[x] > frac[y]; });
  for (int i = 0; i < total - assigned; ++i) counts[order[i % n]] += 1;
  return counts;
}

}  // namespace skelbridge::shapes
