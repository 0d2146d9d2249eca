#pragma once

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "skelbridge/net/generator.hpp"
#include "skelbridge/shapes/dataset.hpp"

namespace skelbridge::train {

struct TrainConfig {
  int epochs = 200;
  int batch = 16;  // gradient-accumulation count
  double lr = 1e-3;
  int plateau_patience = 5;
  double plateau_factor = 0.5;
  double lr_floor = 1e-6;
  // skeleton / surface / adjustment / end-to-end shares of the epoch budget
  std::array<double, 4> stage_fractions = {0.3, 0.3, 0.1, 0.3};
  std::uint64_t seed = 0;
  bool adversarial = true;
  int threads = 0;  // 0: hardware concurrency
  losses::LossWeights weights;
  losses::RepulsionConfig repulsion;
  net::NetConfig net;

  void validate() const;
  static TrainConfig from_json_text(const std::string& text);
  std::string to_json_text() const;

  /// Epochs per stage. Stage 3 is skipped when adjustment is disabled.
  std::array<int, 4> stage_epochs() const;
};

struct EpochLog {
  int epoch = 0;  // global, 1-based
  int stage = 0;  // 1..4
  // NaN marks a phase that is not part of the stage objective
  double l_pk, l_ps, l_psm, l_g, l_d;
  double val_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct RunLog {
  std::vector<EpochLog> rows;
  void write_csv(const std::string& path) const;
};

struct TrainSample {
  std::string id;
  std::string family;
  geom::OrientedPointCloud partial;  // normals looked up from the gt surface
  std::shared_ptr<const geom::OrientedPointCloud> gt_surface;
  std::shared_ptr<const Mat3> gt_skeleton;
  std::shared_ptr<const geom::SpatialIndex> gt_surface_index;
  std::shared_ptr<const geom::SpatialIndex> gt_skeleton_index;
  std::shared_ptr<const net::PyramidPlan> scan_plan;
};

struct Dataset {
  std::vector<TrainSample> train, val, test;
};

/// Loads a generated dataset directory, attaches partial-scan normals from
/// the ground-truth surface, and precomputes per-sample spatial indices and
/// scan pyramid plans.
Dataset load_dataset(const std::string& dir, const net::NetConfig& net_cfg);

struct TrainResult {
  net::ParamStore params;
  RunLog log;
  std::map<std::string, std::string> checkpoints;  // label -> path
};

/// Staged training: (1) skeleton path on L_Pk, (2) fusion + displacement on
/// L_Ps with the skeleton frozen, (3) adjustment on L_Ps^m with everything
/// prior frozen, (4) end-to-end on L_C (+ lambda_G L_G against the patch
/// discriminator, alternating one generator and one discriminator step).
/// Checkpoints land in out_dir at stage boundaries plus best-validation and
/// final. start_epoch > 0 resumes the schedule from that global epoch.
TrainResult train_staged(const Dataset& data, const TrainConfig& cfg,
                         const std::string& out_dir, int start_epoch = 0,
                         const net::ParamStore* initial = nullptr);

}  // namespace skelbridge::train
