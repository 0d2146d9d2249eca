#include "skelbridge/shapes/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "skelbridge/geom/ply_io.hpp"

namespace skelbridge::shapes {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr double kPi = 3.14159265358979323846;

void require_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                  const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

std::vector<Vec3> corner_directions() {
  std::vector<Vec3> dirs;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1}) dirs.push_back(Vec3(sx, sy, sz).normalized());
  return dirs;
}

}  // namespace

void DatasetConfig::validate() const {
  if (n_points < 8) throw ConfigError("n_points must be >= 8");
  if (n_points % 8 != 0) throw ConfigError("n_points must be divisible by 8");
  if (shape_count < 1) throw ConfigError("shape_count must be >= 1");
  if (families.empty()) throw ConfigError("families must be nonempty");
  for (const std::string& f : families) {
    const auto known = default_families();
    if (std::find(known.begin(), known.end(), f) == known.end())
      throw ConfigError("unknown family '" + f + "'");
  }
  if (views_per_shape < 1) throw ConfigError("views_per_shape must be >= 1");
  const double total = split_fractions[0] + split_fractions[1] + split_fractions[2];
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split_fractions must sum to 1");
  if (!(partial.min_keep_frac >= 0.0 && partial.max_keep_frac <= 1.0 &&
        partial.min_keep_frac < partial.max_keep_frac))
    throw ConfigError("partial keep fractions must satisfy 0 <= min < max <= 1");
  if (partial.grid_azimuth < 4 || partial.grid_polar < 2)
    throw ConfigError("partial grid resolution too small");
}

DatasetConfig DatasetConfig::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset config is not valid JSON: ") + e.what());
  }
  require_keys(j,
               {"seed", "n_points", "shape_count", "families", "views_per_shape",
                "split_fractions", "partial"},
               "dataset config");
  DatasetConfig cfg;
  try {
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("n_points")) cfg.n_points = j.at("n_points").get<int>();
    if (j.contains("shape_count")) cfg.shape_count = j.at("shape_count").get<int>();
    if (j.contains("families")) cfg.families = j.at("families").get<std::vector<std::string>>();
    if (j.contains("views_per_shape"))
      cfg.views_per_shape = j.at("views_per_shape").get<int>();
    if (j.contains("split_fractions")) {
      auto v = j.at("split_fractions").get<std::vector<double>>();
      if (v.size() != 3) throw ConfigError("split_fractions must have 3 entries");
      cfg.split_fractions = {v[0], v[1], v[2]};
    }
    if (j.contains("partial")) {
      const auto& p = j.at("partial");
      require_keys(p, {"grid_azimuth", "grid_polar", "min_keep_frac", "max_keep_frac"},
                   "dataset config field 'partial'");
      if (p.contains("grid_azimuth")) cfg.partial.grid_azimuth = p.at("grid_azimuth").get<int>();
      if (p.contains("grid_polar")) cfg.partial.grid_polar = p.at("grid_polar").get<int>();
      if (p.contains("min_keep_frac"))
        cfg.partial.min_keep_frac = p.at("min_keep_frac").get<double>();
      if (p.contains("max_keep_frac"))
        cfg.partial.max_keep_frac = p.at("max_keep_frac").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset config field has the wrong type: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string DatasetConfig::to_json_text() const {
  ordered_json j;
  j["seed"] = seed;
  j["n_points"] = n_points;
  j["shape_count"] = shape_count;
  j["families"] = families;
  j["views_per_shape"] = views_per_shape;
  j["split_fractions"] = {split_fractions[0], split_fractions[1], split_fractions[2]};
  j["partial"] = {{"grid_azimuth", partial.grid_azimuth},
                  {"grid_polar", partial.grid_polar},
                  {"min_keep_frac", partial.min_keep_frac},
                  {"max_keep_frac", partial.max_keep_frac}};
  return j.dump(2);
}

std::optional<std::vector<int>> make_partial_indices(const geom::OrientedPointCloud& gt,
                                                     const Vec3& viewpoint, int n,
                                                     const PartialConfig& cfg) {
  if (gt.count() < 1) throw InvalidInputError("make_partial: empty ground truth");

  // back-face culling
  std::vector<int> front;
  front.reserve(gt.count());
  for (int i = 0; i < gt.count(); ++i) {
    const Vec3 to_view = viewpoint - Vec3(gt.pts.row(i));
    if (gt.normals.row(i).dot(to_view) > 0.0) front.push_back(i);
  }

  // occlusion: nearest point per spherical grid cell around the viewpoint
  const int cells = cfg.grid_azimuth * cfg.grid_polar;
  std::vector<int> cell_best(cells, -1);
  std::vector<double> cell_depth(cells, std::numeric_limits<double>::infinity());
  for (int i : front) {
    const Vec3 d = Vec3(gt.pts.row(i)) - viewpoint;
    const double depth = d.norm();
    const double az = std::atan2(d.y(), d.x());  // [-pi, pi]
    const double pol = std::acos(std::clamp(d.z() / depth, -1.0, 1.0));
    int ia = static_cast<int>((az + kPi) / (2.0 * kPi) * cfg.grid_azimuth);
    int ip = static_cast<int>(pol / kPi * cfg.grid_polar);
    ia = std::clamp(ia, 0, cfg.grid_azimuth - 1);
    ip = std::clamp(ip, 0, cfg.grid_polar - 1);
    const int cell = ia * cfg.grid_polar + ip;
    if (depth < cell_depth[cell]) {
      cell_depth[cell] = depth;
      cell_best[cell] = i;
    }
  }
  std::vector<int> visible;
  for (int i : cell_best)
    if (i >= 0) visible.push_back(i);
  std::sort(visible.begin(), visible.end());

  const double retention = static_cast<double>(visible.size()) / gt.count();
  if (static_cast<int>(visible.size()) < n) return std::nullopt;
  if (retention < cfg.min_keep_frac || retention > cfg.max_keep_frac) return std::nullopt;

  Mat3 vis_pts(visible.size(), 3);
  for (std::size_t i = 0; i < visible.size(); ++i) vis_pts.row(i) = gt.pts.row(visible[i]);
  const std::vector<int> fps = geom::farthest_point_sample(vis_pts, n, 0);
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) out[i] = visible[fps[i]];
  return out;
}

std::optional<geom::PointCloud> make_partial(const geom::OrientedPointCloud& gt,
                                             const Vec3& viewpoint, int n,
                                             const PartialConfig& cfg) {
  auto idx = make_partial_indices(gt, viewpoint, n, cfg);
  if (!idx) return std::nullopt;
  geom::PointCloud out;
  out.pts.resize(n, 3);
  for (int i = 0; i < n; ++i) out.pts.row(i) = gt.pts.row((*idx)[i]);
  return out;
}

std::vector<const SampleRecord*> Manifest::split(const std::string& name) const {
  std::vector<const SampleRecord*> out;
  for (const SampleRecord& s : samples)
    if (s.split == name) out.push_back(&s);
  return out;
}

Manifest generate_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root / "shapes", ec);
  fs::create_directories(root / "samples", ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir);

  const int n = cfg.n_points;
  const int surface_count = 4 * n;
  const int s_total = cfg.shape_count;
  const int n_train = static_cast<int>(std::lround(cfg.split_fractions[0] * s_total));
  const int n_val = static_cast<int>(std::lround(cfg.split_fractions[1] * s_total));
  const auto split_of = [&](int shape_idx) {
    if (shape_idx < n_train) return "train";
    if (shape_idx < n_train + n_val) return "val";
    return "test";
  };

  const std::vector<Vec3> base_dirs = corner_directions();
  Rng root_rng(cfg.seed);

  Manifest manifest;
  manifest.config = cfg;
  char name[128];
  for (int si = 0; si < s_total; ++si) {
    Rng shape_rng = root_rng.fork(static_cast<std::uint64_t>(si) + 1);
    const std::string family = cfg.families[si % cfg.families.size()];
    const SyntheticShape shape =
        make_shape(family, cfg.seed * 1000003ull + static_cast<std::uint64_t>(si));

    Rng surf_rng = shape_rng.fork(1);
    const geom::OrientedPointCloud surface = sample_surface(shape, surface_count, surf_rng);
    Rng skel_rng = shape_rng.fork(2);
    const geom::PointCloud skeleton = sample_skeleton(shape, n, skel_rng);

    std::snprintf(name, sizeof name, "shape_%04d", si);
    ShapeRecord rec;
    rec.id = name;
    rec.family = family;
    rec.split = split_of(si);
    rec.scale = shape.transform.scale;
    rec.translation = shape.transform.translation;
    rec.surface_path = std::string("shapes/") + name + "_surface.ply";
    rec.skeleton_path = std::string("shapes/") + name + "_skeleton.ply";
    geom::write_ply((root / rec.surface_path).string(), surface);
    geom::write_ply((root / rec.skeleton_path).string(), skeleton.pts);
    manifest.shapes.push_back(rec);

    Rng view_rng = shape_rng.fork(3);
    const Vec3 cube_center = Vec3::Constant(0.5);
    for (int vi = 0; vi < cfg.views_per_shape; ++vi) {
      Vec3 dir = base_dirs[vi % base_dirs.size()];
      if (vi >= static_cast<int>(base_dirs.size())) {
        dir = Vec3(view_rng.normal(), view_rng.normal(), view_rng.normal()).normalized();
      }
      std::optional<std::vector<int>> idx;
      Vec3 viewpoint;
      for (int attempt = 0; attempt < 64 && !idx; ++attempt) {
        viewpoint = cube_center + 1.6 * dir;
        idx = make_partial_indices(surface, viewpoint, n, cfg.partial);
        if (!idx)
          dir = (dir + Vec3(view_rng.normal(), view_rng.normal(), view_rng.normal()) * 0.35)
                    .normalized();
      }
      if (!idx)
        throw GenerationError("no admissible viewpoint for shape " + rec.id + " view " +
                              std::to_string(vi));

      Mat3 partial(n, 3);
      for (int i = 0; i < n; ++i) partial.row(i) = surface.pts.row((*idx)[i]);

      SampleRecord sample;
      std::snprintf(name, sizeof name, "%s_view_%d", rec.id.c_str(), vi);
      sample.id = name;
      sample.shape_id = rec.id;
      sample.family = family;
      sample.split = rec.split;
      sample.viewpoint = viewpoint;
      sample.partial_path = std::string("samples/") + name + "_partial.ply";
      sample.surface_path = rec.surface_path;
      sample.skeleton_path = rec.skeleton_path;
      geom::write_ply((root / sample.partial_path).string(), partial);
      manifest.samples.push_back(sample);
    }
  }

  ordered_json j;
  j["schema"] = "skelbridge-dataset-v1";
  j["config"] = nlohmann::json::parse(cfg.to_json_text());
  auto vec3_json = [](const Vec3& v) { return std::vector<double>{v.x(), v.y(), v.z()}; };
  for (const ShapeRecord& s : manifest.shapes) {
    ordered_json js;
    js["id"] = s.id;
    js["family"] = s.family;
    js["split"] = s.split;
    js["scale"] = s.scale;
    js["translation"] = vec3_json(s.translation);
    js["surface"] = s.surface_path;
    js["skeleton"] = s.skeleton_path;
    j["shapes"].push_back(js);
  }
  for (const SampleRecord& s : manifest.samples) {
    ordered_json js;
    js["id"] = s.id;
    js["shape"] = s.shape_id;
    js["family"] = s.family;
    js["split"] = s.split;
    js["viewpoint"] = vec3_json(s.viewpoint);
    js["partial"] = s.partial_path;
    js["surface"] = s.surface_path;
    js["skeleton"] = s.skeleton_path;
    j["samples"].push_back(js);
  }
  std::ofstream out(root / "dataset.json", std::ios::binary);
  if (!out) throw IoError("cannot write manifest: " + (root / "dataset.json").string());
  out << j.dump(2) << "\n";

  return manifest;
}

Manifest Manifest::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!j.contains("schema") || j.at("schema").get<std::string>() != "skelbridge-dataset-v1")
    throw IoError("unsupported manifest schema in " + path);

  Manifest m;
  m.config = DatasetConfig::from_json_text(j.at("config").dump());
  auto to_vec3 = [](const nlohmann::json& arr) {
    return Vec3(arr.at(0).get<double>(), arr.at(1).get<double>(), arr.at(2).get<double>());
  };
  for (const auto& js : j.at("shapes")) {
    ShapeRecord s;
    s.id = js.at("id").get<std::string>();
    s.family = js.at("family").get<std::string>();
    s.split = js.at("split").get<std::string>();
    s.scale = js.at("scale").get<double>();
    s.translation = to_vec3(js.at("translation"));
    s.surface_path = js.at("surface").get<std::string>();
    s.skeleton_path = js.at("skeleton").get<std::string>();
    m.shapes.push_back(s);
  }
  for (const auto& js : j.at("samples")) {
    SampleRecord s;
    s.id = js.at("id").get<std::string>();
    s.shape_id = js.at("shape").get<std::string>();
    s.family = js.at("family").get<std::string>();
    s.split = js.at("split").get<std::string>();
    s.viewpoint = to_vec3(js.at("viewpoint"));
    s.partial_path = js.at("partial").get<std::string>();
    s.surface_path = js.at("surface").get<std::string>();
    s.skeleton_path = js.at("skeleton").get<std::string>();
    m.samples.push_back(s);
  }
  return m;
}

}  // namespace skelbridge::shapes
