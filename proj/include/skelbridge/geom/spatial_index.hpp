#pragma once

#include <vector>

#include "skelbridge/common.hpp"

namespace skelbridge::geom {

/// Uniform-grid acceleration structure over a fixed point set. Immutable
/// after construction; concurrent read-only queries are safe. Results are
/// exact: identical point sets and ordering as a brute-force scan with the
/// (distance, index) tie-break.
class SpatialIndex {
 public:
  explicit SpatialIndex(Mat3 pts);

  int size() const { return static_cast<int>(pts_.rows()); }
  const Mat3& points() const { return pts_; }

  /// k nearest by Euclidean distance, ascending, lowest-index tie-break.
  /// Throws InvalidInputError if k > size or k < 1.
  void knn(const Vec3& query, int k, std::vector<int>& idx,
           std::vector<double>& dist) const;

  int nearest(const Vec3& query) const;

  /// Up to max_count indices with distance <= radius, sorted by
  /// (distance, index). Falls back to the single nearest point when the ball
  /// is empty. Throws InvalidInputError unless radius > 0 and max_count >= 1.
  std::vector<int> ball(const Vec3& query, double radius, int max_count) const;

 private:
  struct CellCoord {
    int x, y, z;
  };
  CellCoord coord_of(const Vec3& p) const;
  int cell_id(int cx, int cy, int cz) const { return (cx * ny_ + cy) * nz_ + cz; }

  Mat3 pts_;
  Vec3 origin_;
  double inv_cell_ = 1.0;
  double cell_ = 1.0;
  int nx_ = 1, ny_ = 1, nz_ = 1;
  std::vector<int> bucket_start_;  // CSR over cells
  std::vector<int> bucket_items_;  // point indices grouped by cell, ascending
};

/// PointNet++-style grouping: for every center, up to max_count indexed
/// points within radius, sorted by (distance, index); empty balls fall back
/// to the nearest point so no group is empty.
std::vector<std::vector<int>> ball_query(const SpatialIndex& index, const Mat3& centers,
                                         double radius, int max_count);

/// Exact k nearest neighbors for every query row.
void knn(const SpatialIndex& index, const Mat3& queries, int k,
         std::vector<std::vector<int>>& idx, std::vector<std::vector<double>>& dist);

/// Nearest indexed point for every query row.
std::vector<int> nearest_neighbors(const SpatialIndex& index, const Mat3& queries);

}  // namespace skelbridge::geom
