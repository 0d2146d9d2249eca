#pragma once

#include <optional>

#include "skelbridge/losses/losses.hpp"
#include "skelbridge/net/params.hpp"

namespace skelbridge::net {

/// Frozen index plan of one multi-scale pyramid: farthest-point centers and
/// padded fixed-size ball groups per level. Indices are recomputed from the
/// positions they were planned on; gradients flow through coordinates, not
/// through the selection.
struct PyramidPlan {
  struct Level {
    std::vector<int> fps;     // center indices into the previous level
    std::vector<int> groups;  // centers * group_size indices into the previous level
  };
  std::vector<Level> levels;
};

PyramidPlan plan_pyramid(const Mat3& pts, const NetConfig& cfg);

struct EncodedPyramid {
  std::vector<ad::Value> pos;   // per level
  std::vector<ad::Value> feat;  // per level
};

/// Set-abstraction stack: FPS centers, ball grouping, local-frame shared MLP,
/// per-group max.
EncodedPyramid encode_pyramid(ad::Graph& g, ad::Value points, const PyramidPlan& plan,
                              Bound& params, const std::string& prefix,
                              const NetConfig& cfg);

/// Multi-scale per-point features: every pyramid level interpolated back to
/// the input points and concatenated. Returns the (features, pyramid) pair.
std::pair<ad::Value, EncodedPyramid> msfa_encode(ad::Graph& g, ad::Value points,
                                                 const PyramidPlan& plan, Bound& params,
                                                 const std::string& prefix,
                                                 const NetConfig& cfg);

/// Shared MLP regressing one skeletal point per input point.
ad::Value skeleton_head(ad::Graph& g, ad::Value features, Bound& params,
                        const NetConfig& cfg);

/// Scaled dot-product cross-attention, skeleton rows as queries over scan
/// rows; per head A = softmax(Q Wq (P Wp)^T / sqrt(d)), output A P; heads
/// concatenated and projected back to the level width. attn_out, when given,
/// receives each head's attention matrix.
ad::Value nonlocal_attention(ad::Graph& g, ad::Value scan_feat, ad::Value skel_feat,
                             Bound& params, int level, const NetConfig& cfg,
                             std::vector<ad::Value>* attn_out = nullptr);

/// Dual pyramids through the shared fusion encoder, cross-attention per level
/// (or skeleton features pass through when attention is disabled), then
/// interpolation back onto the skeletal points.
ad::Value fuse(ad::Graph& g, ad::Value skel_pos, ad::Value scan_pos,
               const PyramidPlan& scan_plan, Bound& params, const NetConfig& cfg,
               std::vector<ad::Value>* attn_out = nullptr);

struct DisplacementOut {
  losses::OrientedValue out;  // 4N oriented points
  ad::Value delta;            // 4N x 3 displacements
};

/// x4 feature copies -> grouped linear -> reshape -> shared MLP -> per-point
/// displacement and raw normal; positions are the repeated skeleton plus the
/// displacement, normals are L2-normalized.
DisplacementOut displacement_head(ad::Graph& g, ad::Value skel_pos, ad::Value fused,
                                  Bound& params, const NetConfig& cfg);

struct AdjustOut {
  losses::OrientedValue out;  // exactly 4N after farthest-point sampling
  ad::Value merged_pos;       // 5N x 3, offsets applied, before sampling
  std::vector<int> fps;       // selected rows of the merged cloud
};

/// Merges the input scan into the prediction, regresses per-point offsets
/// against a tiled global feature, renormalizes normals, and farthest-point
/// samples back to 4N (start index 0).
AdjustOut surface_adjust(ad::Graph& g, const geom::OrientedPointCloud& partial,
                         const losses::OrientedValue& pred, Bound& params,
                         const NetConfig& cfg);

struct DiscriminatorOut {
  ad::Value scores;                      // m x 1, in (0,1)
  std::vector<std::vector<int>> patches; // candidate indices per seed
  std::vector<int> seeds;                // seed indices on the input scan
  double radius = 0.0;
};

/// Patch scores: m random seeds on the input scan, up to n candidate points
/// within r = r_frac x scan bbox diagonal per seed (nearest-point fallback),
/// seed-centered coordinates (+normals) through a shared MLP, max-pool and a
/// sigmoid head. fixed_seeds replays a previous draw so ground-truth patches
/// share the generated patches' seeds.
DiscriminatorOut discriminate(ad::Graph& g, const Mat3& scan_pts,
                              const losses::OrientedValue& candidate, Bound& params,
                              const NetConfig& cfg, Rng& rng,
                              const std::vector<int>* fixed_seeds = nullptr);

struct GeneratorTrace {
  std::vector<ad::Value> attention;          // every head at every level
  std::optional<ad::Value> delta;
  std::optional<ad::Value> merged_pos;
};

struct GeneratorOutput {
  ad::Value skeleton;             // N x 3
  losses::OrientedValue raw;      // 4N
  losses::OrientedValue refined;  // 4N (== raw when adjustment is disabled)
};

/// Full pipeline: skeleton extraction, skeleton-to-surface growth, surface
/// adjustment. All three phase outputs are retained for the completion loss.
GeneratorOutput generator_forward(ad::Graph& g, const geom::OrientedPointCloud& partial,
                                  Bound& params, const NetConfig& cfg,
                                  const PyramidPlan* scan_plan = nullptr,
                                  GeneratorTrace* trace = nullptr);

/// Plane-fit normals for scans that arrive without them: smallest covariance
/// eigenvector over the k nearest neighbors, oriented away from the cloud
/// centroid.
Mat3 estimate_normals(const Mat3& pts, int k = 8);

}  // namespace skelbridge::net
