#pragma once

#include <string>
#include <vector>

#include "skelbridge/geom/point_cloud.hpp"

namespace skelbridge::metrics {

/// Squared Chamfer metric: mean of the two directed mean squared nearest
/// distances (their mean *is* the reported CD; see cd_split). Raw value; the
/// x1000 convention applies at report time.
double chamfer_l2_metric(const Mat3& pred, const Mat3& gt);

/// (CD_comp, CD_acc): mean squared nearest distance gt->pred and pred->gt.
std::pair<double, double> cd_split(const Mat3& pred, const Mat3& gt);

/// Exact Earth Mover's Distance: (1/n) min over bijections of the summed
/// unsquared distances, solved by the Hungarian algorithm. Equal sizes
/// required; sizes above the cap raise SizeCapError telling the caller to
/// subsample (farthest-point) first. Raw value; x100 applies at report time.
double emd_exact(const Mat3& a, const Mat3& b, int size_cap = 512);

/// 0.5 * (mean_P |n_x . n_nn(x)| + mean_P* |n_y . n_nn(y)|), nearest
/// neighbors taken in the other cloud.
double normal_consistency(const geom::OrientedPointCloud& a,
                          const geom::OrientedPointCloud& b);

struct SampleMetrics {
  std::string id;
  std::string family;
  double cd = 0.0;       // raw squared chamfer
  double emd = 0.0;      // raw
  double nc = 0.0;
  double cd_comp = 0.0;  // raw
  double cd_acc = 0.0;   // raw
};

/// Per-sample rows plus per-family and overall aggregates (means). The CSV
/// carries the paper's scaling conventions: CD columns x1000, EMD x100.
struct EvalReport {
  std::vector<SampleMetrics> rows;

  SampleMetrics aggregate(const std::string& family = "") const;  // "" = all
  std::vector<std::string> families() const;
  void write_csv(const std::string& path) const;
  std::string format_table() const;
};

}  // namespace skelbridge::metrics
