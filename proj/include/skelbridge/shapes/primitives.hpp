#pragma once

#include <vector>

#include "skelbridge/common.hpp"
#include "skelbridge/geom/point_cloud.hpp"

namespace skelbridge::shapes {

/// Sphere-swept solid: every point within radius r of a core set. The core
/// (a segment or a rectangle) is the exact medial locus of the solid, which
/// is what makes these primitives useful: skeleton supervision is free.
struct SweptPrimitive {
  enum class Kind { kCapsule, kPlate };

  Kind kind = Kind::kCapsule;
  // capsule: segment endpoints
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  // plate: rectangle center plus orthogonal in-plane half-extent vectors
  Vec3 center = Vec3::Zero();
  Vec3 u = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  double r = 0.1;

  static SweptPrimitive capsule(const Vec3& a, const Vec3& b, double r);
  static SweptPrimitive plate(const Vec3& center, const Vec3& u, const Vec3& v, double r);

  /// Distance from x to the core set.
  double core_distance(const Vec3& x) const;
  Vec3 core_closest(const Vec3& x) const;
  double sdf(const Vec3& x) const { return core_distance(x) - r; }

  /// Length of the segment or area of the rectangle.
  double core_measure() const;
  /// Area of the offset surface.
  double surface_area() const;

  void bounds(Vec3& lo, Vec3& hi) const;

  /// Uniform draw on the offset surface with its outward normal.
  void sample_surface_point(Rng& rng, Vec3& point, Vec3& normal) const;
  /// Uniform draw on the core set.
  Vec3 sample_core_point(Rng& rng) const;

  /// Applies p -> scale*p + t to the primitive (uniform scaling keeps the
  /// sphere-swept structure exact).
  SweptPrimitive transformed(double scale, const Vec3& t) const;

  void validate() const;
};

/// Deterministic largest-remainder apportionment: counts proportional to
/// weights, summing exactly to total, remainders broken by largest fraction
/// then lowest index.
std::vector<int> apportion_counts(const std::vector<double>& weights, int total);

}  // namespace skelbridge::shapes
