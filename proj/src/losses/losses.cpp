#include "skelbridge/losses/losses.hpp"

#include <memory>

namespace skelbridge::losses {

using ad::Value;

namespace {

Value row_norms(ad::Graph& g, Value rows) {
  (void)g;
  return ad::sqrt_clamped(ad::row_sum(ad::square(rows)));
}

Mat3 gather_const(const Mat3& src, const std::vector<int>& idx) {
  Mat3 out(idx.size(), 3);
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = src.row(idx[i]);
  return out;
}

}  // namespace

Value chamfer_loss(ad::Graph& g, Value pred_pos, const Mat3& gt,
                   const geom::SpatialIndex* gt_index) {
  if (pred_pos.rows() < 1 || gt.rows() < 1)
    throw InvalidInputError("chamfer_loss: empty cloud");

  std::unique_ptr<geom::SpatialIndex> own_gt;
  if (!gt_index) {
    own_gt = std::make_unique<geom::SpatialIndex>(gt);
    gt_index = own_gt.get();
  }
  const std::vector<int> to_gt = geom::nearest_neighbors(*gt_index, pred_pos.val());
  const Value d1 = row_norms(g, ad::sub(pred_pos, g.constant(gather_const(gt, to_gt))));

  const geom::SpatialIndex pred_index(pred_pos.val());
  const std::vector<int> to_pred = geom::nearest_neighbors(pred_index, gt);
  const Value d2 =
      row_norms(g, ad::sub(ad::gather_rows(pred_pos, to_pred), g.constant(gt)));

  return ad::add(ad::mean_all(d1), ad::mean_all(d2));
}

Value normal_loss(ad::Graph& g, Value pred_pos, Value pred_normals, const Mat3& gt_pos,
                  const Mat3& gt_normals, const geom::SpatialIndex* gt_index) {
  if (pred_pos.rows() < 1 || gt_pos.rows() < 1)
    throw InvalidInputError("normal_loss: empty cloud");
  if (pred_normals.rows() != pred_pos.rows())
    throw InvalidShapeError("normal_loss: normals/position count mismatch");

  std::unique_ptr<geom::SpatialIndex> own_gt;
  if (!gt_index) {
    own_gt = std::make_unique<geom::SpatialIndex>(gt_pos);
    gt_index = own_gt.get();
  }
  const std::vector<int> nn = geom::nearest_neighbors(*gt_index, pred_pos.val());
  const Value dots =
      ad::row_sum(ad::mul_elem(pred_normals, g.constant(gather_const(gt_normals, nn))));
  return ad::sub(g.scalar(1.0), ad::mean_all(dots));
}

Value repulsion_loss(ad::Graph& g, Value pred_pos, const RepulsionConfig& cfg) {
  const int n = pred_pos.rows();
  if (n < 2) throw InvalidInputError("repulsion_loss: need at least 2 points");

  const geom::SpatialIndex index(pred_pos.val());
  std::vector<int> from, to;
  std::vector<int> idx;
  std::vector<double> dist;
  const int query_k = std::min(cfg.k + 1, n);
  for (int i = 0; i < n; ++i) {
    index.knn(pred_pos.val().row(i), query_k, idx, dist);
    int taken = 0;
    for (int j = 0; j < query_k && taken < cfg.k; ++j) {
      if (idx[j] == i) continue;  // exclude the point itself
      if (dist[j] >= cfg.d) break;
      from.push_back(i);
      to.push_back(idx[j]);
      ++taken;
    }
  }
  if (from.empty()) return g.scalar(0.0);

  const Value diff = ad::sub(ad::gather_rows(pred_pos, to), ad::gather_rows(pred_pos, from));
  const Value dists = row_norms(g, diff);
  const Value hinge =
      ad::relu(ad::sub(g.constant(MatX::Constant(dists.rows(), 1, cfg.d)), dists));
  return ad::scale(ad::sum_all(hinge), 1.0 / static_cast<double>(n));
}

Value point_loss(ad::Graph& g, const OrientedValue& pred, const geom::OrientedPointCloud& gt,
                 const LossWeights& w, const RepulsionConfig& cfg, bool with_normals,
                 const geom::SpatialIndex* gt_index) {
  Value loss = chamfer_loss(g, pred.pos, gt.pts, gt_index);
  if (with_normals && w.lambda_n != 0.0) {
    loss = ad::add(loss, ad::scale(normal_loss(g, pred.pos, pred.normals, gt.pts,
                                               gt.normals, gt_index),
                                   w.lambda_n));
  }
  if (w.lambda_r != 0.0 && pred.pos.rows() >= 2) {
    loss = ad::add(loss, ad::scale(repulsion_loss(g, pred.pos, cfg), w.lambda_r));
  }
  return loss;
}

Value completion_loss(ad::Graph& g, const CompletionValues& out, const Mat3& gt_skeleton,
                      const geom::OrientedPointCloud& gt_surface, const LossWeights& w,
                      const RepulsionConfig& cfg, const geom::SpatialIndex* gt_surface_index,
                      const geom::SpatialIndex* gt_skeleton_index) {
  Value loss = g.scalar(0.0);
  if (w.lambda_k != 0.0) {
    geom::OrientedPointCloud skel_gt{gt_skeleton, Mat3()};
    OrientedValue skel{out.skeleton, out.skeleton};
    loss = ad::add(loss, ad::scale(point_loss(g, skel, skel_gt, w, cfg, false,
                                              gt_skeleton_index),
                                   w.lambda_k));
  }
  if (w.lambda_s != 0.0) {
    loss = ad::add(loss, ad::scale(point_loss(g, out.raw, gt_surface, w, cfg, true,
                                              gt_surface_index),
                                   w.lambda_s));
  }
  if (w.lambda_m != 0.0) {
    loss = ad::add(loss, ad::scale(point_loss(g, out.refined, gt_surface, w, cfg, true,
                                              gt_surface_index),
                                   w.lambda_m));
  }
  return loss;
}

Value lsgan_generator(ad::Graph& g, Value fake_scores) {
  const Value ones = g.constant(MatX::Ones(fake_scores.rows(), fake_scores.cols()));
  return ad::mean_all(ad::square(ad::sub(fake_scores, ones)));
}

Value lsgan_discriminator(ad::Graph& g, Value fake_scores, Value real_scores) {
  const Value ones = g.constant(MatX::Ones(real_scores.rows(), real_scores.cols()));
  return ad::add(ad::mean_all(ad::square(fake_scores)),
                 ad::mean_all(ad::square(ad::sub(real_scores, ones))));
}

}  // namespace skelbridge::losses
