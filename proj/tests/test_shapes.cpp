#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "skelbridge/geom/ply_io.hpp"
#include "skelbridge/shapes/dataset.hpp"
#include "skelbridge/shapes/shape.hpp"

using namespace skelbridge;
using namespace skelbridge::shapes;

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

DatasetConfig tiny_config() {
  DatasetConfig cfg;
  cfg.seed = 5;
  cfg.n_points = 32;
  cfg.shape_count = 5;
  cfg.views_per_shape = 2;
  return cfg;
}

}  // namespace

TEST_CASE("sdf: point capsule, core depth, union minimum") {
  const auto ball = SweptPrimitive::capsule(Vec3(0, 0, 0), Vec3(0, 0, 0), 1.0);
  CHECK(ball.sdf(Vec3(2, 0, 0)) == doctest::Approx(1.0).epsilon(1e-12));

  const auto cap = SweptPrimitive::capsule(Vec3(0, 0, 0), Vec3(1, 0, 0), 0.25);
  CHECK(cap.sdf(Vec3(0.5, 0, 0)) == doctest::Approx(-0.25).epsilon(1e-12));

  SyntheticShape two;
  two.prims = {cap, SweptPrimitive::capsule(Vec3(0.8, 0, 0), Vec3(2, 0, 0), 0.4)};
  const Vec3 probe(1.2, 0.3, -0.1);
  CHECK(two.sdf(probe) ==
        doctest::Approx(std::min(two.prims[0].sdf(probe), two.prims[1].sdf(probe)))
            .epsilon(1e-15));
}

TEST_CASE("plate primitive validates its extent vectors") {
  CHECK_THROWS_AS(SweptPrimitive::plate(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.5, 0.5, 0), 0.1),
                  InvalidInputError);
  CHECK_THROWS_AS(SweptPrimitive::capsule(Vec3(0, 0, 0), Vec3(1, 0, 0), 0.0),
                  InvalidInputError);
}

TEST_CASE("surface samples of a capsule sit at radius r with radial normals") {
  const auto cap = SweptPrimitive::capsule(Vec3(0, 0, 0), Vec3(0, 0, 2), 0.3);
  SyntheticShape s;
  s.prims = {cap};
  Rng rng(3);
  const auto cloud = sample_surface(s, 200, rng);
  for (int i = 0; i < cloud.count(); ++i) {
    const Vec3 p = cloud.pts.row(i);
    CHECK(std::abs(cap.core_distance(p) - 0.3) < 1e-9);
    const Vec3 radial = (p - cap.core_closest(p)) / 0.3;
    CHECK((radial - Vec3(cloud.normals.row(i))).norm() < 1e-9);
  }
}

TEST_CASE("surface samples of a plate expose face normals along the plane normal") {
  const auto plate = SweptPrimitive::plate(Vec3(0, 0, 0), Vec3(0.4, 0, 0), Vec3(0, 0.3, 0), 0.05);
  SyntheticShape s;
  s.prims = {plate};
  Rng rng(4);
  const auto cloud = sample_surface(s, 300, rng);
  int faces = 0;
  for (int i = 0; i < cloud.count(); ++i) {
    CHECK(std::abs(s.sdf(cloud.pts.row(i))) < 1e-9);
    const double nz = std::abs(cloud.normals(i, 2));
    if (nz > 1.0 - 1e-12) ++faces;
  }
  CHECK(faces > 100);  // faces dominate the area of a thin plate
}

TEST_CASE("surface sampling: count one works, normals match fd gradients") {
  Rng rng(6);
  const SyntheticShape s = make_shape("table", 9);
  Rng one(1);
  CHECK(sample_surface(s, 1, one).count() == 1);

  Rng many(2);
  const auto cloud = sample_surface(s, 128, many);
  for (int i = 0; i < cloud.count(); ++i) {
    CHECK(std::abs(s.sdf(cloud.pts.row(i))) <= 1e-9);
    const Vec3 fd = s.sdf_gradient_fd(cloud.pts.row(i)).normalized();
    CHECK(fd.dot(cloud.normals.row(i)) >= 1.0 - 1e-4);
  }
}

TEST_CASE("skeleton samples lie on the cores at depth -r of their owner") {
  Rng rng(7);
  const SyntheticShape s = make_shape("lamp", 4);
  const auto skel = sample_skeleton_tagged(s, 96, rng);
  for (int i = 0; i < skel.cloud.count(); ++i) {
    const SweptPrimitive& owner = s.prims[skel.owner[i]];
    CHECK(owner.core_distance(skel.cloud.pts.row(i)) < 1e-9);
    CHECK(owner.sdf(skel.cloud.pts.row(i)) == doctest::Approx(-owner.r).epsilon(1e-9));
  }
}

TEST_CASE("skeleton counts are proportional to core measure within one") {
  const auto caps = SweptPrimitive::capsule(Vec3(0, 0, 0), Vec3(3, 0, 0), 0.2);
  const auto caps2 = SweptPrimitive::capsule(Vec3(0, 0, 0), Vec3(0, 1, 0), 0.2);
  SyntheticShape s;
  s.prims = {caps, caps2};
  Rng rng(8);
  const auto skel = sample_skeleton_tagged(s, 100, rng);
  int first = 0;
  for (int o : skel.owner)
    if (o == 0) ++first;
  CHECK(std::abs(first - 75) <= 1);
}

TEST_CASE("apportion: largest remainder, exact total, lowest-index ties") {
  CHECK(apportion_counts({1, 1, 1}, 5) == std::vector<int>{2, 2, 1});
  CHECK(apportion_counts({3, 1}, 100) == std::vector<int>{75, 25});
  CHECK(apportion_counts({0.0, 0.0}, 3) == std::vector<int>{2, 1});
  CHECK_THROWS_AS(apportion_counts({}, 3), InvalidInputError);
}

TEST_CASE("families build connected shapes inside the unit cube") {
  for (const std::string& family : default_families()) {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
      const SyntheticShape s = make_shape(family, seed);
      Vec3 lo, hi;
      s.bounds(lo, hi);
      CHECK(lo.minCoeff() >= -1e-9);
      CHECK(hi.maxCoeff() <= 1.0 + 1e-9);
      CHECK(s.family == family);
    }
  }
  CHECK_THROWS_AS(make_shape("teapot", 1), InvalidInputError);
}

TEST_CASE("make_partial: viewpoint above a plate keeps the top face only") {
  const auto plate = SweptPrimitive::plate(Vec3(0.5, 0.5, 0.5), Vec3(0.3, 0, 0),
                                           Vec3(0, 0.3, 0), 0.03);
  SyntheticShape s;
  s.prims = {plate};
  Rng rng(9);
  const auto gt = sample_surface(s, 512, rng);
  PartialConfig cfg;
  cfg.min_keep_frac = 0.05;
  cfg.max_keep_frac = 0.95;
  const auto kept = make_partial_indices(gt, Vec3(0.5, 0.5, 3.0), 64, cfg);
  REQUIRE(kept.has_value());
  for (int i : *kept) {
    // back-face culling: no kept point faces away from the viewpoint
    const Vec3 to_view = Vec3(0.5, 0.5, 3.0) - Vec3(gt.pts.row(i));
    CHECK(gt.normals.row(i).dot(to_view) > 0.0);
    CHECK(gt.normals(i, 2) > -0.5);  // bottom face is culled
  }
}

TEST_CASE("make_partial: convex capsule from far away keeps roughly half") {
  const auto cap = SweptPrimitive::capsule(Vec3(0.3, 0.5, 0.5), Vec3(0.7, 0.5, 0.5), 0.2);
  SyntheticShape s;
  s.prims = {cap};
  Rng rng(10);
  const auto gt = sample_surface(s, 1024, rng);
  PartialConfig cfg;
  int kept = 0;
  for (int i = 0; i < gt.count(); ++i)
    if (gt.normals.row(i).dot(Vec3(0.5, 0.5, 9.0) - Vec3(gt.pts.row(i))) > 0.0) ++kept;
  // hemisphere visibility of a convex body, before occlusion-cell thinning
  CHECK(kept > 0.35 * gt.count());
  CHECK(kept < 0.65 * gt.count());
  const auto idx = make_partial_indices(gt, Vec3(0.5, 0.5, 9.0), 64, cfg);
  REQUIRE(idx.has_value());
  CHECK(static_cast<int>(idx->size()) == 64);
}

TEST_CASE("make_partial: antipodal viewpoints see nearly complementary sets") {
  const auto cap = SweptPrimitive::capsule(Vec3(0.4, 0.5, 0.5), Vec3(0.6, 0.5, 0.5), 0.25);
  SyntheticShape s;
  s.prims = {cap};
  Rng rng(11);
  const auto gt = sample_surface(s, 512, rng);
  PartialConfig cfg;
  const auto a = make_partial_indices(gt, Vec3(0.5, 0.5, 5.0), 64, cfg);
  const auto b = make_partial_indices(gt, Vec3(0.5, 0.5, -4.0), 64, cfg);
  REQUIRE(a.has_value());
  REQUIRE(b.has_value());
  std::set<int> sa(a->begin(), a->end());
  int overlap = 0;
  for (int i : *b)
    if (sa.count(i)) ++overlap;
  CHECK(overlap < 8);
}

TEST_CASE("make_partial: rejection signal when the visible set is too small") {
  // every normal faces -z: a +z viewpoint sees nothing
  Mat3 pts(16, 3), normals(16, 3);
  Rng rng(12);
  for (int i = 0; i < 16; ++i) {
    pts.row(i) = Vec3(rng.uniform(), rng.uniform(), 0.0);
    normals.row(i) = Vec3(0, 0, -1);
  }
  const geom::OrientedPointCloud gt{pts, normals};
  PartialConfig cfg;
  CHECK_FALSE(make_partial_indices(gt, Vec3(0.5, 0.5, 2.0), 8, cfg).has_value());
}

TEST_CASE("generate_dataset: counts, splits and determinism") {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "skb_ds_test";
  fs::remove_all(root);
  const DatasetConfig cfg = tiny_config();
  const Manifest m1 = generate_dataset(cfg, (root / "a").string());

  CHECK(m1.shapes.size() == 5);
  CHECK(m1.samples.size() == 10);  // views_per_shape per shape
  for (const auto& s : m1.shapes) {
    const auto surface = geom::read_ply(((root / "a") / s.surface_path).string());
    CHECK(surface.pts.rows() == 4 * cfg.n_points);
    REQUIRE(surface.has_normals());
    const auto skel = geom::read_ply(((root / "a") / s.skeleton_path).string());
    CHECK(skel.pts.rows() == cfg.n_points);
  }
  for (const auto& s : m1.samples) {
    const auto partial = geom::read_ply(((root / "a") / s.partial_path).string());
    CHECK(partial.pts.rows() == cfg.n_points);
  }

  // splits partition shapes, never views
  std::map<std::string, std::string> split_of_shape;
  for (const auto& s : m1.shapes) split_of_shape[s.id] = s.split;
  for (const auto& s : m1.samples) CHECK(split_of_shape.at(s.shape_id) == s.split);
  CHECK(m1.split("train").size() + m1.split("val").size() + m1.split("test").size() ==
        m1.samples.size());

  const Manifest m2 = generate_dataset(cfg, (root / "b").string());
  CHECK(slurp(root / "a" / "dataset.json") == slurp(root / "b" / "dataset.json"));
  CHECK(slurp(root / "a" / m1.samples[3].partial_path) ==
        slurp(root / "b" / m2.samples[3].partial_path));
  CHECK(slurp(root / "a" / m1.shapes[1].surface_path) ==
        slurp(root / "b" / m2.shapes[1].surface_path));

  const Manifest loaded = Manifest::load((root / "a" / "dataset.json").string());
  CHECK(loaded.samples.size() == m1.samples.size());
  CHECK(loaded.config.n_points == cfg.n_points);
  fs::remove_all(root);
}

TEST_CASE("dataset config: strict keys and validation") {
  CHECK_THROWS_AS(DatasetConfig::from_json_text("{\"n_pointz\": 64}"), ConfigError);
  CHECK_THROWS_AS(DatasetConfig::from_json_text("{\"n_points\": 7}"), ConfigError);
  CHECK_THROWS_AS(DatasetConfig::from_json_text("not json"), ConfigError);
  const DatasetConfig cfg =
      DatasetConfig::from_json_text("{\"n_points\": 64, \"shape_count\": 3}");
  CHECK(cfg.n_points == 64);
  const DatasetConfig back = DatasetConfig::from_json_text(cfg.to_json_text());
  CHECK(back.shape_count == 3);
}
