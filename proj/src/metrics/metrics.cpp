#include "skelbridge/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include "skelbridge/geom/spatial_index.hpp"

namespace skelbridge::metrics {

namespace {

double mean_sq_nearest(const Mat3& from, const geom::SpatialIndex& to_index) {
  double total = 0.0;
  std::vector<int> idx;
  std::vector<double> dist;
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    to_index.knn(from.row(i), 1, idx, dist);
    total += dist[0] * dist[0];
  }
  return total / static_cast<double>(from.rows());
}

// O(n^3) Hungarian (shortest augmenting paths with potentials);
// returns the minimal total assignment cost
double hungarian_total(const MatX& cost) {
  const int n = static_cast<int>(cost.rows());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += cost(p[j] - 1, j - 1);
  return total;
}

}  // namespace

std::pair<double, double> cd_split(const Mat3& pred, const Mat3& gt) {
  if (pred.rows() < 1 || gt.rows() < 1) throw InvalidInputError("cd_split: empty cloud");
  const geom::SpatialIndex pred_index(pred);
  const geom::SpatialIndex gt_index(gt);
  const double comp = mean_sq_nearest(gt, pred_index);
  const double acc = mean_sq_nearest(pred, gt_index);
  return {comp, acc};
}

double chamfer_l2_metric(const Mat3& pred, const Mat3& gt) {
  const auto [comp, acc] = cd_split(pred, gt);
  return 0.5 * (comp + acc);
}

double emd_exact(const Mat3& a, const Mat3& b, int size_cap) {
  if (a.rows() < 1 || b.rows() < 1) throw InvalidInputError("emd_exact: empty cloud");
  if (a.rows() != b.rows())
    throw InvalidInputError("emd_exact: clouds must have equal sizes (" +
                            std::to_string(a.rows()) + " vs " + std::to_string(b.rows()) + ")");
  if (a.rows() > size_cap)
    throw SizeCapError("emd_exact: size " + std::to_string(a.rows()) + " exceeds cap " +
                       std::to_string(size_cap) +
                       "; subsample both clouds (farthest-point) first");
  const int n = static_cast<int>(a.rows());
  MatX cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cost(i, j) = (a.row(i) - b.row(j)).norm();
  return hungarian_total(cost) / static_cast<double>(n);
}

double normal_consistency(const geom::OrientedPointCloud& a,
                          const geom::OrientedPointCloud& b) {
  if (a.count() < 1 || b.count() < 1)
    throw InvalidInputError("normal_consistency: empty cloud");
  if (a.normals.rows() != a.pts.rows() || b.normals.rows() != b.pts.rows())
    throw InvalidInputError("normal_consistency: missing normals");

  const geom::SpatialIndex ai(a.pts);
  const geom::SpatialIndex bi(b.pts);
  double sum_a = 0.0;
  for (int i = 0; i < a.count(); ++i) {
    const int j = bi.nearest(a.pts.row(i));
    sum_a += std::abs(a.normals.row(i).dot(b.normals.row(j)));
  }
  double sum_b = 0.0;
  for (int j = 0; j < b.count(); ++j) {
    const int i = ai.nearest(b.pts.row(j));
    sum_b += std::abs(b.normals.row(j).dot(a.normals.row(i)));
  }
  return 0.5 * (sum_a / a.count() + sum_b / b.count());
}

SampleMetrics EvalReport::aggregate(const std::string& family) const {
  SampleMetrics agg;
  agg.id = family.empty() ? "mean_all" : "mean_" + family;
  agg.family = family.empty() ? "all" : family;
  int n = 0;
  for (const SampleMetrics& r : rows) {
    if (!family.empty() && r.family != family) continue;
    agg.cd += r.cd;
    agg.emd += r.emd;
    agg.nc += r.nc;
    agg.cd_comp += r.cd_comp;
    agg.cd_acc += r.cd_acc;
    ++n;
  }
  if (n > 0) {
    agg.cd /= n;
    agg.emd /= n;
    agg.nc /= n;
    agg.cd_comp /= n;
    agg.cd_acc /= n;
  }
  return agg;
}

std::vector<std::string> EvalReport::families() const {
  std::set<std::string> seen;
  std::vector<std::string> out;
  for (const SampleMetrics& r : rows)
    if (seen.insert(r.family).second) out.push_back(r.family);
  return out;
}

namespace {

void csv_row(std::ostream& out, const SampleMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%s,%.9g,%.9g,%.9g,%.9g,%.9g\n", m.id.c_str(),
                m.family.c_str(), m.cd * 1000.0, m.emd * 100.0, m.nc, m.cd_comp * 1000.0,
                m.cd_acc * 1000.0);
  out << buf;
}

}  // namespace

void EvalReport::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report: " + path);
  out << "# skelbridge-eval-v1 (cd columns x1000 squared chamfer, emd x100 unsquared)\n";
  out << "id,family,cd_x1000,emd_x100,nc,cd_comp_x1000,cd_acc_x1000\n";
  for (const SampleMetrics& r : rows) csv_row(out, r);
  for (const std::string& f : families()) csv_row(out, aggregate(f));
  csv_row(out, aggregate());
  if (!out) throw IoError("report write failed: " + path);
}

std::string EvalReport::format_table() const {
  std::string s;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-14s %10s %10s %8s %12s %12s\n", "family", "cd_x1000",
                "emd_x100", "nc", "comp_x1000", "acc_x1000");
  s += buf;
  auto line = [&](const SampleMetrics& m) {
    std::snprintf(buf, sizeof buf, "%-14s %10.4f %10.4f %8.4f %12.4f %12.4f\n",
                  m.family.c_str(), m.cd * 1000.0, m.emd * 100.0, m.nc, m.cd_comp * 1000.0,
                  m.cd_acc * 1000.0);
    s += buf;
  };
  for (const std::string& f : families()) line(aggregate(f));
  line(aggregate());
  return s;
}

}  // namespace skelbridge::metrics
