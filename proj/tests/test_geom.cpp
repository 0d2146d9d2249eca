#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "skelbridge/geom/ply_io.hpp"
#include "skelbridge/geom/point_cloud.hpp"
#include "skelbridge/geom/spatial_index.hpp"

using namespace skelbridge;
using namespace skelbridge::geom;

namespace {

Mat3 random_cloud(int n, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Mat3 pts(n, 3);
  for (int i = 0; i < n; ++i)
    pts.row(i) = Vec3(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi));
  return pts;
}

// independent O(n^2) oracle with the same (d2, index) tie-break
std::vector<std::pair<double, int>> brute_sorted(const Mat3& pts, const Vec3& q) {
  std::vector<std::pair<double, int>> all(pts.rows());
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    all[i] = {(pts.row(i) - q).squaredNorm(), static_cast<int>(i)};
  std::sort(all.begin(), all.end());
  return all;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("normalize: cloud already spanning the unit cube is untouched") {
  Mat3 pts(2, 3);
  pts << 0, 0, 0, 1, 1, 1;
  auto [cloud, t] = normalize_to_unit_cube(PointCloud{pts});
  CHECK(t.scale == doctest::Approx(1.0));
  CHECK((cloud.pts - pts).norm() == doctest::Approx(0.0));
}

TEST_CASE("normalize: symmetric cube corners") {
  Mat3 pts(2, 3);
  pts << -1, -1, -1, 1, 1, 1;
  auto [cloud, t] = normalize_to_unit_cube(PointCloud{pts});
  CHECK(t.scale == doctest::Approx(0.5));
  CHECK(t.translation.x() == doctest::Approx(0.5));
  CHECK(t.translation.y() == doctest::Approx(0.5));
  CHECK(t.translation.z() == doctest::Approx(0.5));
  CHECK((cloud.pts.row(0) - Vec3(0, 0, 0)).norm() == doctest::Approx(0.0));
  CHECK((cloud.pts.row(1) - Vec3(1, 1, 1)).norm() == doctest::Approx(0.0));
}

TEST_CASE("normalize: degenerate single point maps to the cube center at scale 1") {
  Mat3 pts(1, 3);
  pts << 5, 5, 5;
  auto [cloud, t] = normalize_to_unit_cube(PointCloud{pts});
  CHECK(t.scale == doctest::Approx(1.0));
  CHECK((cloud.pts.row(0) - Vec3(0.5, 0.5, 0.5)).norm() == doctest::Approx(0.0));
}

TEST_CASE("normalize: round-trips, stays inside the cube, rejects empty input") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat3 pts = random_cloud(30, rng, -4.0, 9.0);
    auto [cloud, t] = normalize_to_unit_cube(PointCloud{pts});
    CHECK(cloud.pts.minCoeff() >= -1e-12);
    CHECK(cloud.pts.maxCoeff() <= 1.0 + 1e-12);
    CHECK((t.invert(cloud.pts) - pts).cwiseAbs().maxCoeff() < 1e-9);
  }
  CHECK_THROWS_AS(normalize_to_unit_cube(PointCloud{}), InvalidInputError);
}

TEST_CASE("normalize: permutation-invariant and commutes with rigid translation") {
  Rng rng(11);
  const Mat3 pts = random_cloud(40, rng);
  auto [base, t0] = normalize_to_unit_cube(PointCloud{pts});

  Mat3 permuted = pts;
  for (int i = 39; i > 0; --i) {
    const int j = rng.uniform_int(i + 1);
    permuted.row(i).swap(permuted.row(j));
  }
  auto [norm_perm, t1] = normalize_to_unit_cube(PointCloud{permuted});
  // same transform: compare via a fixed probe point
  const Vec3 probe(0.3, -1.2, 4.5);
  CHECK((t0.apply(probe) - t1.apply(probe)).norm() < 1e-12);

  const Vec3 shift(3.5, -2.0, 0.25);
  auto [norm_shift, t2] = normalize_to_unit_cube(PointCloud{(pts.rowwise() + shift).eval()});
  CHECK((norm_shift.pts - base.pts).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("fps: k equal to count returns every index in selection order") {
  Rng rng(3);
  const Mat3 pts = random_cloud(12, rng);
  const auto idx = farthest_point_sample(pts, 12, 2);
  CHECK(idx.size() == 12);
  std::vector<int> sorted = idx;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 12; ++i) CHECK(sorted[i] == i);
  CHECK(idx[0] == 2);
}

TEST_CASE("fps: collinear points pick the far end then the midpoint tie by lowest index") {
  Mat3 pts(10, 3);
  for (int i = 0; i < 10; ++i) pts.row(i) = Vec3(i, 0, 0);
  const auto idx = farthest_point_sample(pts, 3, 0);
  CHECK(idx == std::vector<int>{0, 9, 4});
}

TEST_CASE("fps: k=1 returns the start; k>count rejected") {
  Rng rng(5);
  const Mat3 pts = random_cloud(6, rng);
  CHECK(farthest_point_sample(pts, 1, 4) == std::vector<int>{4});
  CHECK_THROWS_AS(farthest_point_sample(pts, 7, 0), InvalidInputError);
}

TEST_CASE("fps: spreads at least as well as a random subset almost always") {
  Rng rng(17);
  auto min_pair_dist = [](const Mat3& pts, const std::vector<int>& idx) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = i + 1; j < idx.size(); ++j)
        best = std::min(best, (pts.row(idx[i]) - pts.row(idx[j])).norm());
    return best;
  };
  int wins = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const Mat3 pts = random_cloud(512, rng);
    const auto fps = farthest_point_sample(pts, 32, 0);
    std::vector<int> all(512);
    std::iota(all.begin(), all.end(), 0);
    for (int i = 511; i > 0; --i) std::swap(all[i], all[rng.uniform_int(i + 1)]);
    all.resize(32);
    if (min_pair_dist(pts, fps) >= min_pair_dist(pts, all)) ++wins;
  }
  CHECK(wins >= 95);
}

TEST_CASE("knn: a query on an indexed point finds itself at distance zero") {
  Rng rng(23);
  const Mat3 pts = random_cloud(50, rng);
  const SpatialIndex index(pts);
  std::vector<int> idx;
  std::vector<double> dist;
  index.knn(pts.row(17), 1, idx, dist);
  CHECK(idx[0] == 17);
  CHECK(dist[0] == 0.0);
}

TEST_CASE("knn: unit square corners from the center are all sqrt(2)/2 away") {
  Mat3 pts(4, 3);
  pts << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0;
  const SpatialIndex index(pts);
  std::vector<int> idx;
  std::vector<double> dist;
  index.knn(Vec3(0.5, 0.5, 0), 4, idx, dist);
  CHECK(idx == std::vector<int>{0, 1, 2, 3});  // equidistant: index order
  for (double d : dist) CHECK(d == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("knn: k equal to the indexed count is the full sorted list; larger k rejected") {
  Rng rng(29);
  const Mat3 pts = random_cloud(20, rng);
  const SpatialIndex index(pts);
  std::vector<int> idx;
  std::vector<double> dist;
  const Vec3 q(0.2, 0.8, 0.5);
  index.knn(q, 20, idx, dist);
  const auto oracle = brute_sorted(pts, q);
  for (int i = 0; i < 20; ++i) CHECK(idx[i] == oracle[i].second);
  CHECK(std::is_sorted(dist.begin(), dist.end()));
  CHECK_THROWS_AS(index.knn(q, 21, idx, dist), InvalidInputError);
}

TEST_CASE("knn and ball match brute force bit-for-bit on random clouds") {
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + rng.uniform_int(256);
    const Mat3 pts = random_cloud(n, rng);
    const SpatialIndex index(pts);
    for (int q = 0; q < 5; ++q) {
      const Vec3 query(rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2));
      const auto oracle = brute_sorted(pts, query);
      const int k = 1 + rng.uniform_int(n);
      std::vector<int> idx;
      std::vector<double> dist;
      index.knn(query, k, idx, dist);
      for (int i = 0; i < k; ++i) {
        CHECK(idx[i] == oracle[i].second);
        CHECK(dist[i] == std::sqrt(oracle[i].first));
      }

      const double radius = rng.uniform(0.05, 0.8);
      const auto ball = index.ball(query, radius, 16);
      std::vector<int> expect;
      for (const auto& [d2, i] : oracle)
        if (d2 <= radius * radius && static_cast<int>(expect.size()) < 16)
          expect.push_back(i);
      if (expect.empty()) expect = {oracle[0].second};
      CHECK(ball == expect);
    }
  }
}

TEST_CASE("ball: coincident point first, fallback length one, empty index rejected") {
  Mat3 pts(3, 3);
  pts << 0, 0, 0, 1, 0, 0, 0, 2, 0;
  const SpatialIndex index(pts);
  const auto hit = index.ball(Vec3(1, 0, 0), 0.5, 4);
  CHECK(hit.size() == 1);
  CHECK(hit[0] == 1);
  const auto fallback = index.ball(Vec3(10, 10, 10), 0.1, 4);
  CHECK(fallback.size() == 1);
  CHECK_THROWS_AS(SpatialIndex(Mat3(0, 3)), InvalidInputError);
  CHECK_THROWS_AS(index.ball(Vec3(0, 0, 0), -1.0, 4), InvalidInputError);
}

TEST_CASE("ball: grid neighborhoods match the brute-force count exactly") {
  Mat3 pts(27, 3);
  int row = 0;
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y)
      for (int z = 0; z < 3; ++z) pts.row(row++) = Vec3(x, y, z);
  const SpatialIndex index(pts);
  // below the sqrt(2) face diagonal: exactly the 6-neighborhood plus self
  const auto axis_only = index.ball(Vec3(1, 1, 1), 1.25, 27);
  CHECK(axis_only.size() == 7);
  // at 1.5x spacing the 12 face diagonals (sqrt(2) ~ 1.414) join in
  const auto wide = index.ball(Vec3(1, 1, 1), 1.5, 27);
  CHECK(wide.size() == 19);
  for (int i : wide) CHECK((pts.row(i) - Vec3(1, 1, 1)).norm() <= 1.5);
}

TEST_CASE("ply: oriented round-trip at 32-bit precision and byte-stable writes") {
  Rng rng(41);
  const Mat3 pts = random_cloud(17, rng);
  Mat3 normals(17, 3);
  for (int i = 0; i < 17; ++i)
    normals.row(i) = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();

  const std::string path = (std::filesystem::temp_directory_path() / "skb_ply_test.ply").string();
  write_ply(path, pts, normals);
  const PlyContents back = read_ply(path);
  REQUIRE(back.has_normals());
  CHECK((back.pts - pts).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((*back.normals - normals).cwiseAbs().maxCoeff() < 1e-6);
  // 32-bit floats round-trip exactly through %.9g
  const std::string first = slurp(path);
  write_ply(path, back.pts, *back.normals);
  CHECK(slurp(path) == first);

  const std::string bare = (std::filesystem::temp_directory_path() / "skb_ply_bare.ply").string();
  write_ply(bare, pts);
  CHECK_FALSE(read_ply(bare).has_normals());
  std::filesystem::remove(path);
  std::filesystem::remove(bare);
}

TEST_CASE("ply: parse errors carry line numbers") {
  const std::string path = (std::filesystem::temp_directory_path() / "skb_bad.ply").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
           "property float z\nend_header\n0 0 0\n1 oops 1\n";
  }
  try {
    read_ply(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 9);
  }
  std::filesystem::remove(path);
}
