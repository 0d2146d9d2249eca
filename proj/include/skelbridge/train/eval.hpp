#pragma once

#include "skelbridge/metrics/metrics.hpp"
#include "skelbridge/train/trainer.hpp"

namespace skelbridge::train {

struct EvalOptions {
  int emd_cap = 512;  // clouds larger than this are FPS-subsampled for EMD
  int threads = 0;
  bool oracle = false;  // score the ground truth against itself
};

/// Runs the generator over the samples and scores the refined output against
/// the ground-truth surface (CD, EMD, normal consistency, CD_comp/CD_acc).
metrics::EvalReport evaluate(const std::vector<TrainSample>& samples,
                             const net::ParamStore& params, const net::NetConfig& cfg,
                             const EvalOptions& opts = {});

/// Loads a checkpoint and verifies every parameter against the shapes the
/// config implies, reporting an explicit diff on mismatch.
net::ParamStore load_params_checked(const std::string& ckpt_path, const net::NetConfig& cfg);

/// EMD with the equal-size/size-cap preconditions satisfied by
/// farthest-point subsampling (start index 0).
double emd_with_subsample(const Mat3& pred, const Mat3& gt, int cap);

}  // namespace skelbridge::train
