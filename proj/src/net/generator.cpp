#include "skelbridge/net/generator.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "skelbridge/geom/spatial_index.hpp"

namespace skelbridge::net {

using ad::Value;

namespace {

Value linear(ad::Graph& g, Value x, Bound& params, const std::string& prefix) {
  (void)g;
  Value y = ad::matmul(x, params(prefix + "_w"));
  return ad::add(y, ad::tile_rows(params(prefix + "_b"), y.rows()));
}

}  // namespace

PyramidPlan plan_pyramid(const Mat3& pts, const NetConfig& cfg) {
  PyramidPlan plan;
  plan.levels.resize(cfg.levels);
  Mat3 prev = pts;
  for (int i = 0; i < cfg.levels; ++i) {
    const int centers = static_cast<int>(pts.rows()) >> (i + 1);
    if (centers < 1) throw InvalidInputError("plan_pyramid: too few points for the level count");
    PyramidPlan::Level& lv = plan.levels[i];
    lv.fps = geom::farthest_point_sample(prev, centers, 0);
    Mat3 cpts(centers, 3);
    for (int c = 0; c < centers; ++c) cpts.row(c) = prev.row(lv.fps[c]);
    const geom::SpatialIndex index(prev);
    lv.groups.reserve(static_cast<std::size_t>(centers) * cfg.group_size);
    for (int c = 0; c < centers; ++c) {
      std::vector<int> ball = index.ball(cpts.row(c), cfg.radii[i], cfg.group_size);
      for (int k = 0; k < cfg.group_size; ++k)
        lv.groups.push_back(ball[std::min<std::size_t>(k, ball.size() - 1)]);
    }
    prev = std::move(cpts);
  }
  return plan;
}

EncodedPyramid encode_pyramid(ad::Graph& g, Value points, const PyramidPlan& plan,
                              Bound& params, const std::string& prefix,
                              const NetConfig& cfg) {
  EncodedPyramid pyr;
  Value prev_pos = points;
  Value prev_feat;  // empty at level 0
  for (int i = 0; i < cfg.levels; ++i) {
    const PyramidPlan::Level& lv = plan.levels[i];
    const Value centers = ad::gather_rows(prev_pos, lv.fps);
    const Value grouped = ad::gather_rows(prev_pos, lv.groups);
    const Value local =
        ad::sub(grouped, ad::repeat_interleave_rows(centers, cfg.group_size));
    Value rows = i == 0 ? local
                        : ad::concat_cols({local, ad::gather_rows(prev_feat, lv.groups)});
    const std::string lp = prefix + "/l" + std::to_string(i);
    rows = ad::relu(linear(g, rows, params, lp + "/mlp0"));
    rows = ad::relu(linear(g, rows, params, lp + "/mlp1"));
    const Value feat = ad::group_max(rows, cfg.group_size);
    pyr.pos.push_back(centers);
    pyr.feat.push_back(feat);
    prev_pos = centers;
    prev_feat = feat;
  }
  return pyr;
}

std::pair<Value, EncodedPyramid> msfa_encode(ad::Graph& g, Value points,
                                             const PyramidPlan& plan, Bound& params,
                                             const std::string& prefix,
                                             const NetConfig& cfg) {
  EncodedPyramid pyr = encode_pyramid(g, points, plan, params, prefix, cfg);
  std::vector<Value> per_level;
  per_level.reserve(cfg.levels);
  for (int i = 0; i < cfg.levels; ++i)
    per_level.push_back(ad::interp3(points, pyr.pos[i], pyr.feat[i]));
  return {ad::concat_cols(per_level), std::move(pyr)};
}

Value skeleton_head(ad::Graph& g, Value features, Bound& params, const NetConfig& cfg) {
  Value h = features;
  for (std::size_t i = 0; i < cfg.head_widths.size(); ++i)
    h = ad::relu(linear(g, h, params, "skel_head/fc" + std::to_string(i)));
  return linear(g, h, params, "skel_head/out");
}

Value nonlocal_attention(ad::Graph& g, Value scan_feat, Value skel_feat, Bound& params,
                         int level, const NetConfig& cfg, std::vector<Value>* attn_out) {
  if (scan_feat.cols() != skel_feat.cols())
    throw InvalidShapeError("nonlocal_attention: feature widths differ");
  const int c = scan_feat.cols();
  const int d = c / cfg.heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const std::string lv = "attn/l" + std::to_string(level);

  std::vector<Value> heads;
  heads.reserve(cfg.heads);
  for (int h = 0; h < cfg.heads; ++h) {
    const std::string hd = lv + "/h" + std::to_string(h);
    const Value q = ad::matmul(skel_feat, params(hd + "/wq"));
    const Value p = ad::matmul(scan_feat, params(hd + "/wp"));
    const Value attn =
        ad::row_softmax(ad::scale(ad::matmul(q, ad::transpose(p)), inv_sqrt_d));
    if (attn_out) attn_out->push_back(attn);
    heads.push_back(ad::matmul(attn, scan_feat));
  }
  const Value cat = cfg.heads == 1 ? heads[0] : ad::concat_cols(heads);
  return linear(g, cat, params, lv + "/proj");
}

Value fuse(ad::Graph& g, Value skel_pos, Value scan_pos, const PyramidPlan& scan_plan,
           Bound& params, const NetConfig& cfg, std::vector<Value>* attn_out) {
  const EncodedPyramid scan_pyr =
      encode_pyramid(g, scan_pos, scan_plan, params, "fuse_enc", cfg);
  const PyramidPlan skel_plan = plan_pyramid(skel_pos.val(), cfg);
  const EncodedPyramid skel_pyr =
      encode_pyramid(g, skel_pos, skel_plan, params, "fuse_enc", cfg);

  std::vector<Value> per_level;
  per_level.reserve(cfg.levels);
  for (int i = 0; i < cfg.levels; ++i) {
    const Value attended =
        cfg.attention
            ? nonlocal_attention(g, scan_pyr.feat[i], skel_pyr.feat[i], params, i, cfg,
                                 attn_out)
            : skel_pyr.feat[i];
    per_level.push_back(ad::interp3(skel_pos, skel_pyr.pos[i], attended));
  }
  return ad::concat_cols(per_level);
}

DisplacementOut displacement_head(ad::Graph& g, Value skel_pos, Value fused, Bound& params,
                                  const NetConfig& cfg) {
  const int n = fused.rows();
  std::vector<Value> copies(cfg.upsample, fused);
  const Value x4 = ad::concat_cols(copies);
  std::vector<Value> blocks;
  blocks.reserve(cfg.upsample);
  for (int i = 0; i < cfg.upsample; ++i) blocks.push_back(params("disp/g" + std::to_string(i) + "_w"));
  Value grouped = ad::grouped_linear(x4, blocks);
  grouped = ad::add(grouped, ad::tile_rows(params("disp/g_b"), n));
  Value h = ad::relu(ad::reshape(grouped, n * cfg.upsample, cfg.disp_width));
  h = ad::relu(linear(g, h, params, "disp/fc0"));
  const Value out6 = linear(g, h, params, "disp/out");

  DisplacementOut out;
  out.delta = ad::slice_cols(out6, 0, 3);
  out.out.pos = ad::add(ad::repeat_interleave_rows(skel_pos, cfg.upsample), out.delta);
  out.out.normals = ad::row_l2_normalize(ad::slice_cols(out6, 3, 3));
  return out;
}

AdjustOut surface_adjust(ad::Graph& g, const geom::OrientedPointCloud& partial,
                         const losses::OrientedValue& pred, Bound& params,
                         const NetConfig& cfg) {
  MatX partial6(partial.count(), 6);
  partial6 << partial.pts, partial.normals;
  const Value merged =
      ad::concat_rows({g.constant(partial6), ad::concat_cols({pred.pos, pred.normals})});
  const int m = merged.rows();

  Value h = ad::relu(linear(g, merged, params, "adjust/mlp0"));
  h = ad::relu(linear(g, h, params, "adjust/mlp1"));
  const Value global = ad::tile_rows(ad::max_over_rows(h), m);
  Value o = ad::relu(linear(g, ad::concat_cols({h, global}), params, "adjust/off0"));
  o = linear(g, o, params, "adjust/off1");

  AdjustOut out;
  out.merged_pos = ad::add(ad::slice_cols(merged, 0, 3), ad::slice_cols(o, 0, 3));
  const Value adjusted_n =
      ad::row_l2_normalize(ad::add(ad::slice_cols(merged, 3, 3), ad::slice_cols(o, 3, 3)));
  const int keep = cfg.upsample * cfg.n_points;
  out.fps = geom::farthest_point_sample(out.merged_pos.val(), keep, 0);
  out.out.pos = ad::gather_rows(out.merged_pos, out.fps);
  out.out.normals = ad::gather_rows(adjusted_n, out.fps);
  return out;
}

DiscriminatorOut discriminate(ad::Graph& g, const Mat3& scan_pts,
                              const losses::OrientedValue& candidate, Bound& params,
                              const NetConfig& cfg, Rng& rng,
                              const std::vector<int>* fixed_seeds) {
  if (candidate.pos.rows() < 1) throw InvalidInputError("discriminate: empty candidate");
  const Vec3 lo = scan_pts.colwise().minCoeff();
  const Vec3 hi = scan_pts.colwise().maxCoeff();
  DiscriminatorOut out;
  out.radius = cfg.disc_radius_frac * (hi - lo).norm();

  const geom::SpatialIndex cand_index(candidate.pos.val());
  std::vector<Value> scores;
  scores.reserve(cfg.disc_seeds);
  for (int s = 0; s < cfg.disc_seeds; ++s) {
    const int seed = fixed_seeds ? (*fixed_seeds)[s]
                                 : rng.uniform_int(static_cast<int>(scan_pts.rows()));
    out.seeds.push_back(seed);
    std::vector<int> idx = cand_index.ball(scan_pts.row(seed), out.radius, cfg.disc_patch);
    out.patches.push_back(idx);

    const Value center = g.constant(scan_pts.row(seed));
    const Value local = ad::sub(ad::gather_rows(candidate.pos, idx),
                                ad::tile_rows(center, static_cast<int>(idx.size())));
    const Value rows =
        cfg.disc_use_normals
            ? ad::concat_cols({local, ad::gather_rows(candidate.normals, idx)})
            : local;
    Value h = ad::relu(linear(g, rows, params, "disc/mlp0"));
    h = ad::relu(linear(g, h, params, "disc/mlp1"));
    Value score = ad::max_over_rows(h);
    score = ad::relu(linear(g, score, params, "disc/head0"));
    score = ad::sigmoid(linear(g, score, params, "disc/head1"));
    scores.push_back(score);
  }
  out.scores = scores.size() == 1 ? scores[0] : ad::concat_rows(scores);
  return out;
}

GeneratorOutput generator_forward(ad::Graph& g, const geom::OrientedPointCloud& partial,
                                  Bound& params, const NetConfig& cfg,
                                  const PyramidPlan* scan_plan, GeneratorTrace* trace) {
  if (partial.count() != cfg.n_points)
    throw InvalidInputError("generator_forward: partial scan must have exactly N points");

  PyramidPlan local_plan;
  if (!scan_plan) {
    local_plan = plan_pyramid(partial.pts, cfg);
    scan_plan = &local_plan;
  }
  const Value scan_pos = g.constant(partial.pts);

  GeneratorOutput out;
  auto [skel_feats, skel_pyr] =
      msfa_encode(g, scan_pos, *scan_plan, params, "skel_enc", cfg);
  out.skeleton = skeleton_head(g, skel_feats, params, cfg);

  const Value fused = fuse(g, out.skeleton, scan_pos, *scan_plan, params, cfg,
                           trace ? &trace->attention : nullptr);
  DisplacementOut disp = displacement_head(g, out.skeleton, fused, params, cfg);
  out.raw = disp.out;
  if (trace) trace->delta = disp.delta;

  if (cfg.adjust) {
    AdjustOut adj = surface_adjust(g, partial, out.raw, params, cfg);
    out.refined = adj.out;
    if (trace) trace->merged_pos = adj.merged_pos;
  } else {
    out.refined = out.raw;
  }
  return out;
}

Mat3 estimate_normals(const Mat3& pts, int k) {
  const int n = static_cast<int>(pts.rows());
  if (n < 3) throw InvalidInputError("estimate_normals: need at least 3 points");
  k = std::min(k, n);
  const geom::SpatialIndex index(pts);
  const Vec3 centroid = pts.colwise().mean();

  Mat3 normals(n, 3);
  std::vector<int> idx;
  std::vector<double> dist;
  for (int i = 0; i < n; ++i) {
    index.knn(pts.row(i), k, idx, dist);
    Vec3 mean = Vec3::Zero();
    for (int j : idx) mean += pts.row(j);
    mean /= static_cast<double>(idx.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j : idx) {
      const Vec3 d = Vec3(pts.row(j)) - mean;
      cov += d.transpose() * d;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    Vec3 normal = eig.eigenvectors().col(0).transpose();  // smallest eigenvalue
    if (normal.dot(Vec3(pts.row(i)) - centroid) < 0.0) normal = -normal;
    const double len = normal.norm();
    normals.row(i) = len > 1e-12 ? (normal / len).eval() : Vec3(0, 0, 1);
  }
  return normals;
}

}  // namespace skelbridge::net
