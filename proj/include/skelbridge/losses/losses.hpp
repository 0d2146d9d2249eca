#pragma once

#include "skelbridge/ad/graph.hpp"
#include "skelbridge/geom/point_cloud.hpp"
#include "skelbridge/geom/spatial_index.hpp"

namespace skelbridge::losses {

struct LossWeights {
  double lambda_k = 1.0;
  double lambda_s = 1.0;
  double lambda_m = 0.1;
  double lambda_n = 0.001;
  double lambda_r = 0.1;
  double lambda_g = 0.01;
};

struct RepulsionConfig {
  double d = 3e-4;  // maximal distance threshold
  int k = 5;        // neighbor count
};

struct OrientedValue {
  ad::Value pos;
  ad::Value normals;
};

/// Symmetric mean nearest unsquared distance (both directions added).
/// Nearest-neighbor assignments are recomputed per forward and treated as
/// constant for gradients. gt_index, when given, must index gt.
ad::Value chamfer_loss(ad::Graph& g, ad::Value pred_pos, const Mat3& gt,
                       const geom::SpatialIndex* gt_index = nullptr);

/// Mean (1 - n_x . n_y) over predicted points, y the gt point nearest to x.
/// Predicted normals must already be unit length (row_l2_normalize upstream).
ad::Value normal_loss(ad::Graph& g, ad::Value pred_pos, ad::Value pred_normals,
                      const Mat3& gt_pos, const Mat3& gt_normals,
                      const geom::SpatialIndex* gt_index = nullptr);

/// (1/|P|) sum over points of sum over close neighbors of max(0, d - dist),
/// neighbors being the k nearest within distance < d, self excluded.
ad::Value repulsion_loss(ad::Graph& g, ad::Value pred_pos, const RepulsionConfig& cfg);

/// L_CD + lambda_n * L_n (surface phases only) + lambda_r * L_r.
ad::Value point_loss(ad::Graph& g, const OrientedValue& pred,
                     const geom::OrientedPointCloud& gt, const LossWeights& w,
                     const RepulsionConfig& cfg, bool with_normals,
                     const geom::SpatialIndex* gt_index = nullptr);

struct CompletionValues {
  ad::Value skeleton;      // N x 3
  OrientedValue raw;       // 4N
  OrientedValue refined;   // 4N
};

/// lambda_k * L(P_k) + lambda_s * L(P_s) + lambda_m * L(P_s^m); the skeleton
/// term carries no normal component. Zero-weight phases are skipped, so the
/// result is exactly independent of them.
ad::Value completion_loss(ad::Graph& g, const CompletionValues& out, const Mat3& gt_skeleton,
                          const geom::OrientedPointCloud& gt_surface, const LossWeights& w,
                          const RepulsionConfig& cfg,
                          const geom::SpatialIndex* gt_surface_index = nullptr,
                          const geom::SpatialIndex* gt_skeleton_index = nullptr);

/// Least-squares GAN objectives on post-sigmoid scores.
ad::Value lsgan_generator(ad::Graph& g, ad::Value fake_scores);
ad::Value lsgan_discriminator(ad::Graph& g, ad::Value fake_scores, ad::Value real_scores);

}  // namespace skelbridge::losses
