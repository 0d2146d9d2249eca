#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "skelbridge/ad/gradcheck.hpp"
#include "skelbridge/losses/losses.hpp"

using namespace skelbridge;
using namespace skelbridge::losses;
using ad::Graph;
using ad::Value;

namespace {

Mat3 random_cloud(int n, Rng& rng) {
  Mat3 pts(n, 3);
  for (int i = 0; i < n; ++i)
    pts.row(i) = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
  return pts;
}

Mat3 random_normals(int n, Rng& rng) {
  Mat3 out(n, 3);
  for (int i = 0; i < n; ++i)
    out.row(i) = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
  return out;
}

double scalar(Value v) { return v.val()(0, 0); }

}  // namespace

TEST_CASE("chamfer: identical clouds score zero") {
  Rng rng(1);
  const Mat3 pts = random_cloud(24, rng);
  Graph g;
  CHECK(scalar(chamfer_loss(g, g.var(pts), pts)) <= 1e-12);
}

TEST_CASE("chamfer: two-against-one direct evaluation") {
  Mat3 p(2, 3), q(1, 3);
  p << 0, 0, 0, 1, 0, 0;
  q << 0, 0, 0;
  Graph g;
  CHECK(scalar(chamfer_loss(g, g.var(p), q)) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("chamfer: invariant to rigid translation of both clouds") {
  Rng rng(2);
  const Mat3 p = random_cloud(16, rng);
  const Mat3 q = random_cloud(20, rng);
  Graph g;
  const double base = scalar(chamfer_loss(g, g.var(p), q));
  const Vec3 shift(2.5, -1.0, 0.75);
  Graph g2;
  const double moved = scalar(
      chamfer_loss(g2, g2.var((p.rowwise() + shift).eval()), (q.rowwise() + shift).eval()));
  CHECK(moved == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("chamfer: symmetric and permutation-invariant on detached inputs") {
  Rng rng(3);
  const Mat3 p = random_cloud(15, rng);
  const Mat3 q = random_cloud(9, rng);
  Graph g;
  const double ab = scalar(chamfer_loss(g, g.constant(p), q));
  const double ba = scalar(chamfer_loss(g, g.constant(q), p));
  CHECK(ab == doctest::Approx(ba).epsilon(1e-12));

  Mat3 p_perm = p;
  p_perm.row(0).swap(p_perm.row(7));
  p_perm.row(3).swap(p_perm.row(11));
  CHECK(scalar(chamfer_loss(g, g.constant(p_perm), q)) == doctest::Approx(ab).epsilon(1e-12));
}

TEST_CASE("normal loss: aligned zero, flipped two, orthogonal one") {
  Rng rng(4);
  const Mat3 pts = random_cloud(12, rng);
  const Mat3 normals = random_normals(12, rng);
  Graph g;
  CHECK(scalar(normal_loss(g, g.var(pts), g.constant(normals), pts, normals)) ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(scalar(normal_loss(g, g.var(pts), g.constant((-normals).eval()), pts, normals)) ==
        doctest::Approx(2.0).epsilon(1e-12));

  Mat3 zhat(5, 3), xhat(5, 3), grid(5, 3);
  for (int i = 0; i < 5; ++i) {
    grid.row(i) = Vec3(i, 0, 0);
    zhat.row(i) = Vec3(0, 0, 1);
    xhat.row(i) = Vec3(1, 0, 0);
  }
  CHECK(scalar(normal_loss(g, g.var(grid), g.constant(xhat), grid, zhat)) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("repulsion: zero beyond the threshold, d/2 for one close pair, d for duplicates") {
  RepulsionConfig cfg;  // d = 3e-4, k = 5
  Graph g;
  Mat3 spread(3, 3);
  spread << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  CHECK(scalar(repulsion_loss(g, g.var(spread), cfg)) == 0.0);

  Mat3 close(2, 3);
  close << 0, 0, 0, cfg.d / 2, 0, 0;
  CHECK(scalar(repulsion_loss(g, g.var(close), cfg)) ==
        doctest::Approx(cfg.d / 2).epsilon(1e-12));

  Mat3 dup(2, 3);
  dup << 0.4, 0.4, 0.4, 0.4, 0.4, 0.4;
  CHECK(scalar(repulsion_loss(g, g.var(dup), cfg)) == doctest::Approx(cfg.d).epsilon(1e-12));
  CHECK_THROWS_AS(repulsion_loss(g, g.var(Mat3(1, 3)), cfg), InvalidInputError);
}

TEST_CASE("repulsion: zero on well-separated random clouds") {
  RepulsionConfig cfg;
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Mat3 pts = random_cloud(30, rng);  // unit-cube spacing >> 3e-4
    double min_dist = 1e9;
    for (int i = 0; i < 30; ++i)
      for (int j = i + 1; j < 30; ++j)
        min_dist = std::min(min_dist, (pts.row(i) - pts.row(j)).norm());
    if (min_dist < cfg.d) continue;
    Graph g;
    CHECK(scalar(repulsion_loss(g, g.var(pts), cfg)) == 0.0);
  }
}

TEST_CASE("point loss: zero at the target, reduces to chamfer when weights vanish") {
  Rng rng(6);
  const Mat3 pts = random_cloud(18, rng);
  const Mat3 normals = random_normals(18, rng);
  const geom::OrientedPointCloud gt{pts, normals};
  LossWeights w;
  RepulsionConfig cfg;
  Graph g;
  const OrientedValue pred{g.var(pts), g.constant(normals)};
  CHECK(scalar(point_loss(g, pred, gt, w, cfg, true)) <= 1e-12);

  LossWeights zeroed;
  zeroed.lambda_n = 0.0;
  zeroed.lambda_r = 0.0;
  const Mat3 moved = random_cloud(18, rng);
  Graph g2;
  const OrientedValue pred2{g2.var(moved), g2.constant(normals)};
  const double pl = scalar(point_loss(g2, pred2, gt, zeroed, cfg, true));
  const double cd = scalar(chamfer_loss(g2, g2.var(moved), pts));
  CHECK(pl == cd);  // bitwise: the same node composition
}

TEST_CASE("point loss: recomposes from separately computed components") {
  Rng rng(7);
  const Mat3 gt_pts = random_cloud(20, rng);
  const Mat3 gt_n = random_normals(20, rng);
  const Mat3 pred_pts = (gt_pts.array() + 0.01).matrix();
  const Mat3 pred_n = random_normals(20, rng);
  const geom::OrientedPointCloud gt{gt_pts, gt_n};
  LossWeights w;
  RepulsionConfig cfg;

  Graph g;
  const OrientedValue pred{g.var(pred_pts), g.constant(pred_n)};
  const double combined = scalar(point_loss(g, pred, gt, w, cfg, true));
  const double parts =
      scalar(chamfer_loss(g, g.var(pred_pts), gt_pts)) +
      w.lambda_n *
          scalar(normal_loss(g, g.var(pred_pts), g.constant(pred_n), gt_pts, gt_n)) +
      w.lambda_r * scalar(repulsion_loss(g, g.var(pred_pts), cfg));
  CHECK(combined == doctest::Approx(parts).epsilon(1e-12));
}

TEST_CASE("completion loss: zero at the target and independent of zero-weight phases") {
  Rng rng(8);
  const Mat3 skel = random_cloud(10, rng);
  const Mat3 surf = random_cloud(40, rng);
  const Mat3 surf_n = random_normals(40, rng);
  const geom::OrientedPointCloud gt{surf, surf_n};
  LossWeights w;
  RepulsionConfig cfg;

  Graph g;
  CompletionValues perfect{g.var(skel),
                           {g.var(surf), g.constant(surf_n)},
                           {g.var(surf), g.constant(surf_n)}};
  CHECK(scalar(completion_loss(g, perfect, skel, gt, w, cfg)) <= 1e-12);

  LossWeights no_m = w;
  no_m.lambda_m = 0.0;
  const Mat3 junk = random_cloud(40, rng);
  Graph g2;
  CompletionValues a{g2.var(skel), {g2.var(surf), g2.constant(surf_n)},
                     {g2.var(surf), g2.constant(surf_n)}};
  CompletionValues b{g2.var(skel), {g2.var(surf), g2.constant(surf_n)},
                     {g2.var(junk), g2.constant(surf_n)}};
  CHECK(scalar(completion_loss(g2, a, skel, gt, no_m, cfg)) ==
        scalar(completion_loss(g2, b, skel, gt, no_m, cfg)));
}

TEST_CASE("completion loss: recomposes from weighted phase sums") {
  Rng rng(9);
  const Mat3 skel_gt = random_cloud(12, rng);
  const Mat3 surf_gt = random_cloud(48, rng);
  const Mat3 surf_gt_n = random_normals(48, rng);
  const geom::OrientedPointCloud gt{surf_gt, surf_gt_n};
  const Mat3 pk = random_cloud(12, rng);
  const Mat3 ps = random_cloud(48, rng);
  const Mat3 ps_n = random_normals(48, rng);
  const Mat3 pm = random_cloud(48, rng);
  const Mat3 pm_n = random_normals(48, rng);
  LossWeights w;
  RepulsionConfig cfg;

  Graph g;
  CompletionValues out{g.var(pk), {g.var(ps), g.constant(ps_n)},
                       {g.var(pm), g.constant(pm_n)}};
  const double total = scalar(completion_loss(g, out, skel_gt, gt, w, cfg));
  const double parts =
      w.lambda_k * scalar(point_loss(g, {g.var(pk), g.var(pk)}, {skel_gt, Mat3()}, w, cfg,
                                     false)) +
      w.lambda_s *
          scalar(point_loss(g, {g.var(ps), g.constant(ps_n)}, gt, w, cfg, true)) +
      w.lambda_m *
          scalar(point_loss(g, {g.var(pm), g.constant(pm_n)}, gt, w, cfg, true));
  CHECK(total == doctest::Approx(parts).epsilon(1e-12));
}

TEST_CASE("lsgan: perfect scores zero the objectives; 0.5 gives the textbook values") {
  Graph g;
  CHECK(scalar(lsgan_generator(g, g.constant(MatX::Ones(6, 1)))) == 0.0);
  CHECK(scalar(lsgan_discriminator(g, g.constant(MatX::Zero(6, 1)),
                                   g.constant(MatX::Ones(6, 1)))) == 0.0);
  CHECK(scalar(lsgan_generator(g, g.constant(MatX::Constant(4, 1, 0.5)))) ==
        doctest::Approx(0.25).epsilon(1e-15));
  CHECK(scalar(lsgan_discriminator(g, g.constant(MatX::Constant(4, 1, 0.5)),
                                   g.constant(MatX::Constant(4, 1, 0.5)))) ==
        doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("losses pass gradient checks away from assignment boundaries") {
  Rng rng(10);
  const Mat3 gt = random_cloud(10, rng);
  const Mat3 gt_n = random_normals(10, rng);
  const Mat3 pred = random_cloud(8, rng);
  const Mat3 pred_n_raw = random_normals(8, rng);

  const double cd_err = ad::gradient_check(
      [&](Graph& g, const std::vector<Value>& in) { return chamfer_loss(g, in[0], gt); },
      {pred}, 1e-6);
  CHECK(cd_err <= 1e-4);

  const double nl_err = ad::gradient_check(
      [&](Graph& g, const std::vector<Value>& in) {
        return normal_loss(g, g.constant(pred), ad::row_l2_normalize(in[0]), gt, gt_n);
      },
      {(pred_n_raw.array() * 2.0).matrix()}, 1e-6);
  CHECK(nl_err <= 1e-4);

  RepulsionConfig rep;
  rep.d = 0.5;  // make neighborhoods nonempty on a unit-cube cloud
  const double rep_err = ad::gradient_check(
      [&](Graph& g, const std::vector<Value>& in) { return repulsion_loss(g, in[0], rep); },
      {pred}, 1e-6);
  CHECK(rep_err <= 1e-4);

  const double gan_err = ad::gradient_check(
      [&](Graph& g, const std::vector<Value>& in) {
        return lsgan_discriminator(g, ad::sigmoid(in[0]), ad::sigmoid(in[1]));
      },
      {random_cloud(5, rng).col(0).eval(), random_cloud(5, rng).col(0).eval()}, 1e-6);
  CHECK(gan_err <= 1e-4);
}
