#include "skelbridge/geom/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace skelbridge::geom {

namespace {

struct Candidate {
  double d2;
  int idx;
  bool operator<(const Candidate& o) const {
    return d2 < o.d2 || (d2 == o.d2 && idx < o.idx);
  }
};

}  // namespace

SpatialIndex::SpatialIndex(Mat3 pts) : pts_(std::move(pts)) {
  const int n = static_cast<int>(pts_.rows());
  if (n == 0) throw InvalidInputError("SpatialIndex: empty point set");
  if (!pts_.allFinite()) throw InvalidInputError("SpatialIndex: non-finite coordinates");

  const Vec3 lo = pts_.colwise().minCoeff();
  const Vec3 hi = pts_.colwise().maxCoeff();
  origin_ = lo;
  const double max_extent = (hi - lo).maxCoeff();

  const int m = std::clamp(static_cast<int>(std::ceil(std::cbrt(static_cast<double>(n)))), 1, 64);
  cell_ = max_extent > 0.0 ? max_extent / m : 1.0;
  inv_cell_ = 1.0 / cell_;
  nx_ = std::max(1, static_cast<int>(std::floor((hi.x() - lo.x()) * inv_cell_)) + 1);
  ny_ = std::max(1, static_cast<int>(std::floor((hi.y() - lo.y()) * inv_cell_)) + 1);
  nz_ = std::max(1, static_cast<int>(std::floor((hi.z() - lo.z()) * inv_cell_)) + 1);

  const int cells = nx_ * ny_ * nz_;
  std::vector<int> counts(cells, 0);
  std::vector<int> cell_of(n);
  for (int i = 0; i < n; ++i) {
    const CellCoord c = coord_of(pts_.row(i));
    cell_of[i] = cell_id(c.x, c.y, c.z);
    ++counts[cell_of[i]];
  }
  bucket_start_.assign(cells + 1, 0);
  for (int c = 0; c < cells; ++c) bucket_start_[c + 1] = bucket_start_[c] + counts[c];
  bucket_items_.resize(n);
  std::vector<int> cursor(bucket_start_.begin(), bucket_start_.end() - 1);
  for (int i = 0; i < n; ++i) bucket_items_[cursor[cell_of[i]]++] = i;  // ascending per cell
}

SpatialIndex::CellCoord SpatialIndex::coord_of(const Vec3& p) const {
  auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
  return {clampi(static_cast<int>(std::floor((p.x() - origin_.x()) * inv_cell_)), nx_),
          clampi(static_cast<int>(std::floor((p.y() - origin_.y()) * inv_cell_)), ny_),
          clampi(static_cast<int>(std::floor((p.z() - origin_.z()) * inv_cell_)), nz_)};
}

void SpatialIndex::knn(const Vec3& query, int k, std::vector<int>& idx,
                       std::vector<double>& dist) const {
  const int n = size();
  if (k < 1) throw InvalidInputError("knn: k must be >= 1");
  if (k > n) throw InvalidInputError("knn: k exceeds indexed count");

  // max-heap of the best k candidates under the (d2, index) order
  std::vector<Candidate> heap;
  heap.reserve(k + 1);
  auto worse = [](const Candidate& a, const Candidate& b) { return a < b; };

  const CellCoord qc = coord_of(query);
  const int max_ring = std::max({nx_, ny_, nz_});
  for (int ring = 0; ring <= max_ring; ++ring) {
    if (static_cast<int>(heap.size()) == k) {
      // every point in an unvisited ring is at least (ring-1)*cell away
      const double bound = (ring - 1) * cell_;
      if (bound > 0.0 && bound * bound > heap.front().d2) break;
    }
    const int x0 = qc.x - ring, x1 = qc.x + ring;
    const int y0 = qc.y - ring, y1 = qc.y + ring;
    const int z0 = qc.z - ring, z1 = qc.z + ring;
    for (int cx = std::max(0, x0); cx <= std::min(nx_ - 1, x1); ++cx) {
      for (int cy = std::max(0, y0); cy <= std::min(ny_ - 1, y1); ++cy) {
        for (int cz = std::max(0, z0); cz <= std::min(nz_ - 1, z1); ++cz) {
          const bool on_shell = cx == x0 || cx == x1 || cy == y0 || cy == y1 ||
                                cz == z0 || cz == z1;
          if (!on_shell) continue;
          const int cid = cell_id(cx, cy, cz);
          for (int j = bucket_start_[cid]; j < bucket_start_[cid + 1]; ++j) {
            const int p = bucket_items_[j];
            const Candidate cand{(pts_.row(p) - query).squaredNorm(), p};
            if (static_cast<int>(heap.size()) < k) {
              heap.push_back(cand);
              std::push_heap(heap.begin(), heap.end(), worse);
            } else if (cand < heap.front()) {
              std::pop_heap(heap.begin(), heap.end(), worse);
              heap.back() = cand;
              std::push_heap(heap.begin(), heap.end(), worse);
            }
          }
        }
      }
    }
  }

  std::sort_heap(heap.begin(), heap.end(), worse);
  idx.resize(k);
  dist.resize(k);
  for (int i = 0; i < k; ++i) {
    idx[i] = heap[i].idx;
    dist[i] = std::sqrt(heap[i].d2);
  }
}

int SpatialIndex::nearest(const Vec3& query) const {
  std::vector<int> idx;
  std::vector<double> dist;
  knn(query, 1, idx, dist);
  return idx[0];
}

std::vector<int> SpatialIndex::ball(const Vec3& query, double radius, int max_count) const {
  if (!(radius > 0.0)) throw InvalidInputError("ball: radius must be positive");
  if (max_count < 1) throw InvalidInputError("ball: max_count must be >= 1");

  std::vector<Candidate> found;
  const double r2 = radius * radius;
  const CellCoord lo = coord_of(query - Vec3::Constant(radius));
  const CellCoord hi = coord_of(query + Vec3::Constant(radius));
  for (int cx = lo.x; cx <= hi.x; ++cx) {
    for (int cy = lo.y; cy <= hi.y; ++cy) {
      for (int cz = lo.z; cz <= hi.z; ++cz) {
        const int cid = cell_id(cx, cy, cz);
        for (int j = bucket_start_[cid]; j < bucket_start_[cid + 1]; ++j) {
          const int p = bucket_items_[j];
          const double d2 = (pts_.row(p) - query).squaredNorm();
          if (d2 <= r2) found.push_back({d2, p});
        }
      }
    }
  }
  if (found.empty()) return {nearest(query)};
  std::sort(found.begin(), found.end());
  if (static_cast<int>(found.size()) > max_count) found.resize(max_count);
  std::vector<int> out(found.size());
  for (std::size_t i = 0; i < found.size(); ++i) out[i] = found[i].idx;
  return out;
}

std::vector<std::vector<int>> ball_query(const SpatialIndex& index, const Mat3& centers,
                                         double radius, int max_count) {
  std::vector<std::vector<int>> out(centers.rows());
  for (Eigen::Index i = 0; i < centers.rows(); ++i)
    out[i] = index.ball(centers.row(i), radius, max_count);
  return out;
}

void knn(const SpatialIndex& index, const Mat3& queries, int k,
         std::vector<std::vector<int>>& idx, std::vector<std::vector<double>>& dist) {
  idx.assign(queries.rows(), {});
  dist.assign(queries.rows(), {});
  for (Eigen::Index i = 0; i < queries.rows(); ++i)
    index.knn(queries.row(i), k, idx[i], dist[i]);
}

std::vector<int> nearest_neighbors(const SpatialIndex& index, const Mat3& queries) {
  std::vector<int> out(queries.rows());
  for (Eigen::Index i = 0; i < queries.rows(); ++i) out[i] = index.nearest(queries.row(i));
  return out;
}

}  // namespace skelbridge::geom
