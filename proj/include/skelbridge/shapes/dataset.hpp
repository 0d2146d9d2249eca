#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "skelbridge/shapes/shape.hpp"

namespace skelbridge::shapes {

struct PartialConfig {
  int grid_azimuth = 64;
  int grid_polar = 32;
  double min_keep_frac = 0.2;
  double max_keep_frac = 0.8;
};

struct DatasetConfig {
  std::uint64_t seed = 0;
  int n_points = 256;          // N; gt surface carries 4N points
  int shape_count = 200;
  std::vector<std::string> families = default_families();
  int views_per_shape = 8;
  std::array<double, 3> split_fractions = {0.8, 0.1, 0.1};
  PartialConfig partial;

  void validate() const;
  static DatasetConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

/// Synthesizes a single-viewpoint scan from the ground-truth surface:
/// back-face culling by normal direction, occlusion culling on a spherical
/// depth grid around the viewpoint (nearest point per cell), then
/// farthest-point sampling down to exactly n points. Returns indices into
/// the ground-truth cloud, or nullopt when the viewpoint must be rejected
/// (visible set smaller than n, or retention outside the configured band).
std::optional<std::vector<int>> make_partial_indices(const geom::OrientedPointCloud& gt,
                                                     const Vec3& viewpoint, int n,
                                                     const PartialConfig& cfg);

std::optional<geom::PointCloud> make_partial(const geom::OrientedPointCloud& gt,
                                             const Vec3& viewpoint, int n,
                                             const PartialConfig& cfg);

struct ShapeRecord {
  std::string id;
  std::string family;
  std::string split;
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();
  std::string surface_path;
  std::string skeleton_path;
};

struct SampleRecord {
  std::string id;
  std::string shape_id;
  std::string family;
  std::string split;
  Vec3 viewpoint = Vec3::Zero();
  std::string partial_path;
  std::string surface_path;
  std::string skeleton_path;
};

struct Manifest {
  DatasetConfig config;
  std::vector<ShapeRecord> shapes;
  std::vector<SampleRecord> samples;

  static Manifest load(const std::string& path);
  std::vector<const SampleRecord*> split(const std::string& name) const;
};

/// Generates the dataset under out_dir (PLY files plus dataset.json) and
/// returns the manifest. Fully reproducible from the config seed; two runs
/// produce byte-identical trees.
Manifest generate_dataset(const DatasetConfig& cfg, const std::string& out_dir);

}  // namespace skelbridge::shapes
