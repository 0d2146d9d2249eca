#pragma once

#include <string>
#include <vector>

#include "skelbridge/shapes/primitives.hpp"

namespace skelbridge::shapes {

/// Union of sphere-swept primitives, already normalized into the unit cube.
struct SyntheticShape {
  std::vector<SweptPrimitive> prims;
  std::string family;
  std::uint64_t seed = 0;
  geom::UnitCubeTransform transform;  // raw family coordinates -> unit cube

  double sdf(const Vec3& x) const;
  /// Index of the primitive realizing the union minimum.
  int owning_primitive(const Vec3& x) const;
  void bounds(Vec3& lo, Vec3& hi) const;
  /// Central-difference gradient of the union sdf (test oracle).
  Vec3 sdf_gradient_fd(const Vec3& x, double h = 1e-6) const;
};

/// Families: table (plate top + 4 capsule legs), lamp (capsule pole + plate
/// base + plate shade), frame (4 capsules in a loop), cross (2 intersecting
/// plates). Parameters are jittered from rng; the result is normalized into
/// the unit cube and checked for connectivity.
SyntheticShape make_shape(const std::string& family, std::uint64_t seed);

std::vector<std::string> default_families();

struct SurfaceSample {
  geom::OrientedPointCloud cloud;
  std::vector<int> owner;  // primitive index per point
};

/// Area-weighted samples on the union's offset surface with exact analytic
/// normals. Points closer than the junction clearance to another primitive's
/// surface (or inside it) are redrawn so every kept point lies exactly on
/// the union boundary. Throws GenerationError when a primitive's budget of
/// attempts is exhausted (fully swallowed primitive).
SurfaceSample sample_surface_tagged(const SyntheticShape& shape, int count, Rng& rng);
geom::OrientedPointCloud sample_surface(const SyntheticShape& shape, int count, Rng& rng);

struct SkeletonSample {
  geom::PointCloud cloud;
  std::vector<int> owner;
};

/// Measure-weighted (length/area) samples on the union of cores.
SkeletonSample sample_skeleton_tagged(const SyntheticShape& shape, int count, Rng& rng);
geom::PointCloud sample_skeleton(const SyntheticShape& shape, int count, Rng& rng);

}  // namespace skelbridge::shapes
