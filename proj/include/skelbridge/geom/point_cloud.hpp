#pragma once

#include <utility>

#include "skelbridge/common.hpp"

namespace skelbridge::geom {

struct PointCloud {
  Mat3 pts;

  PointCloud() = default;
  explicit PointCloud(Mat3 p) : pts(std::move(p)) {}

  int count() const { return static_cast<int>(pts.rows()); }
  bool empty() const { return pts.rows() == 0; }
  /// All coordinates finite.
  void validate() const;
};

struct OrientedPointCloud {
  Mat3 pts;
  Mat3 normals;

  OrientedPointCloud() = default;
  OrientedPointCloud(Mat3 p, Mat3 n) : pts(std::move(p)), normals(std::move(n)) {}

  int count() const { return static_cast<int>(pts.rows()); }
  bool empty() const { return pts.rows() == 0; }
  /// Same count as positions, each normal unit length within 1e-6.
  void validate() const;
};

/// Maps a source cloud's bounding box into [0,1]^3: p -> scale * p + translation.
struct UnitCubeTransform {
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * p + translation; }
  Vec3 invert(const Vec3& p) const { return (p - translation) / scale; }
  Mat3 apply(const Mat3& pts) const {
    return (pts * scale).rowwise() + translation;
  }
  Mat3 invert(const Mat3& pts) const {
    return (pts.rowwise() - translation) / scale;
  }
};

/// Uniform-scale normalization centered in the unit cube. Degenerate extents:
/// scale by the largest extent; if all extents are zero, scale 1 and map to
/// the cube center. Throws InvalidInputError on an empty cloud.
std::pair<PointCloud, UnitCubeTransform> normalize_to_unit_cube(const PointCloud& cloud);

/// Greedy farthest-point subset. First index is `start`; each next index
/// maximizes the distance to the already-selected set, ties broken by lowest
/// index. Throws InvalidInputError unless 1 <= k <= count.
std::vector<int> farthest_point_sample(const Mat3& pts, int k, int start);

}  // namespace skelbridge::geom
