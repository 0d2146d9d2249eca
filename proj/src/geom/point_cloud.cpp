#include "skelbridge/geom/point_cloud.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace skelbridge::geom {

void PointCloud::validate() const {
  if (!pts.allFinite()) throw InvalidInputError("point cloud contains non-finite coordinates");
}

void OrientedPointCloud::validate() const {
  if (pts.rows() != normals.rows())
    throw InvalidInputError("oriented cloud: position/normal count mismatch");
  if (!pts.allFinite() || !normals.allFinite())
    throw InvalidInputError("oriented cloud contains non-finite values");
  for (Eigen::Index i = 0; i < normals.rows(); ++i) {
    const double len = normals.row(i).norm();
    if (std::abs(len - 1.0) > 1e-6)
      throw InvalidInputError("normal " + std::to_string(i) + " is not unit length");
  }
}

std::pair<PointCloud, UnitCubeTransform> normalize_to_unit_cube(const PointCloud& cloud) {
  if (cloud.empty()) throw InvalidInputError("normalize_to_unit_cube: empty cloud");
  cloud.validate();

  const Vec3 lo = cloud.pts.colwise().minCoeff();
  const Vec3 hi = cloud.pts.colwise().maxCoeff();
  const Vec3 extent = hi - lo;
  const double max_extent = extent.maxCoeff();

  UnitCubeTransform t;
  t.scale = max_extent > 0.0 ? 1.0 / max_extent : 1.0;
  const Vec3 center = 0.5 * (lo + hi);
  t.translation = Vec3::Constant(0.5) - t.scale * center;

  return {PointCloud{t.apply(cloud.pts)}, t};
}

std::vector<int> farthest_point_sample(const Mat3& pts, int k, int start) {
  const int n = static_cast<int>(pts.rows());
  if (k < 1 || k > n) throw InvalidInputError("farthest_point_sample: need 1 <= k <= count");
  if (start < 0 || start >= n) throw InvalidInputError("farthest_point_sample: start out of range");

  std::vector<int> selected;
  selected.reserve(k);
  selected.push_back(start);

  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> picked(n, 0);
  picked[start] = 1;
  int last = start;
  for (int s = 1; s < k; ++s) {
    const Vec3 p = pts.row(last);
    int best = -1;
    double best_d2 = -1.0;
    for (int i = 0; i < n; ++i) {
      const double d2 = (pts.row(i) - p).squaredNorm();
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (!picked[i] && min_d2[i] > best_d2) {  // strict: ties keep the lowest index
        best_d2 = min_d2[i];
        best = i;
      }
    }
    selected.push_back(best);
    picked[best] = 1;
    last = best;
  }
  return selected;
}

}  // namespace skelbridge::geom
