#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "skelbridge/ad/checkpoint.hpp"
#include "skelbridge/ad/gradcheck.hpp"
#include "skelbridge/ad/graph.hpp"
#include "skelbridge/ad/optim.hpp"

using namespace skelbridge;
using namespace skelbridge::ad;

namespace {

MatX randmat(int r, int c, Rng& rng, double scale = 1.0) {
  MatX m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

}  // namespace

TEST_CASE("row softmax of a constant row is uniform and sums to one") {
  Graph g;
  const Value y = row_softmax(g.constant(MatX::Constant(2, 5, 3.7)));
  for (int i = 0; i < 2; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 5; ++j) {
      CHECK(y.val()(i, j) == doctest::Approx(0.2).epsilon(1e-12));
      CHECK(y.val()(i, j) > 0.0);
      sum += y.val()(i, j);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("matmul by the identity leaves values and gradients untouched") {
  Rng rng(1);
  Graph g;
  const MatX x = randmat(4, 4, rng);
  const Value xv = g.var(x);
  const Value y = matmul(xv, g.constant(MatX::Identity(4, 4)));
  CHECK((y.val() - x).norm() == 0.0);
  g.backward(sum_all(y));
  CHECK((g.grad(xv) - MatX::Ones(4, 4)).norm() == 0.0);
}

TEST_CASE("grouped linear with identity blocks is the identity") {
  Rng rng(2);
  Graph g;
  const MatX x = randmat(6, 4 * 3, rng);
  std::vector<Value> blocks;
  for (int i = 0; i < 4; ++i) blocks.push_back(g.constant(MatX::Identity(3, 3)));
  const Value y = grouped_linear(g.var(x), blocks);
  CHECK((y.val() - x).norm() == 0.0);
}

TEST_CASE("grouped linear with one group equals plain matmul bitwise") {
  Rng rng(3);
  Graph g;
  const MatX x = randmat(5, 7, rng);
  const MatX w = randmat(7, 4, rng);
  const Value a = grouped_linear(g.var(x), {g.var(w)});
  const Value b = matmul(g.var(x), g.var(w));
  CHECK((a.val() - b.val()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward: sum gives ones, squared norm gives 2x, loss must be scalar") {
  Rng rng(4);
  Graph g;
  const MatX x = randmat(3, 4, rng);
  const Value xv = g.var(x);
  g.backward(sum_all(xv));
  CHECK((g.grad(xv) - MatX::Ones(3, 4)).norm() == 0.0);

  Graph g2;
  const Value xv2 = g2.var(x);
  g2.backward(sum_all(square(xv2)));
  CHECK((g2.grad(xv2) - 2.0 * x).cwiseAbs().maxCoeff() < 1e-14);

  Graph g3;
  CHECK_THROWS_AS(g3.backward(g3.var(x)), InvalidInputError);
}

TEST_CASE("backward run twice produces identical gradients") {
  Rng rng(5);
  Graph g;
  const Value x = g.var(randmat(4, 3, rng));
  const Value w = g.var(randmat(3, 3, rng));
  const Value loss = mean_all(square(relu(matmul(x, w))));
  g.backward(loss);
  const MatX gx = g.grad(x);
  const MatX gw = g.grad(w);
  g.backward(loss);
  CHECK((g.grad(x) - gx).cwiseAbs().maxCoeff() == 0.0);
  CHECK((g.grad(w) - gw).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("unreached parameters receive zero gradients") {
  Rng rng(6);
  Graph g;
  const Value used = g.var(randmat(2, 2, rng));
  const Value unused = g.var(randmat(2, 2, rng));
  g.backward(sum_all(used));
  CHECK(g.grad(unused).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradient check: linear map is exact to 1e-9") {
  Rng rng(7);
  const MatX w = randmat(4, 3, rng);
  const double err = gradient_check(
      [&](Graph& g, const std::vector<Value>& in) {
        return sum_all(matmul(in[0], g.constant(w)));
      },
      {randmat(5, 4, rng)}, 1e-5);
  CHECK(err <= 1e-9);
}

TEST_CASE("gradient check: relu away from the kink") {
  Rng rng(8);
  MatX x = randmat(4, 4, rng);
  for (int i = 0; i < 16; ++i)
    if (std::abs(x(i / 4, i % 4)) < 1e-3) x(i / 4, i % 4) = 0.5;
  const double err = gradient_check(
      [](Graph&, const std::vector<Value>& in) { return mean_all(square(relu(in[0]))); },
      {x}, 1e-6);
  CHECK(err <= 1e-6);
}

TEST_CASE("gradient check: three-layer MLP matches central differences") {
  Rng rng(9);
  const MatX x = randmat(6, 5, rng);
  const double err = gradient_check(
      [](Graph& g, const std::vector<Value>& in) {
        Value h = relu(matmul(in[0], in[1]));
        h = relu(matmul(h, in[2]));
        h = matmul(h, in[3]);
        return mean_all(square(h));
      },
      {x, randmat(5, 8, rng), randmat(8, 6, rng), randmat(6, 2, rng)}, 1e-5);
  CHECK(err <= 1e-4);
}

TEST_CASE("gradient check: every remaining op family") {
  Rng rng(10);
  auto check = [](const GradCheckFn& fn, std::vector<MatX> in, double tol = 1e-6) {
    CHECK(gradient_check(fn, in, 1e-5) <= tol);
  };
  check([](Graph&, const std::vector<Value>& in) {
    return mean_all(mul_elem(sigmoid(in[0]), row_softmax(in[1])));
  }, {randmat(3, 4, rng), randmat(3, 4, rng)});
  check([](Graph&, const std::vector<Value>& in) {
    return sum_all(square(row_l2_normalize(in[0])));
  }, {(randmat(4, 3, rng).array() + 2.0).matrix().eval()});
  check([](Graph&, const std::vector<Value>& in) {
    return mean_all(concat_cols({in[0], scale(in[1], 1.5)}));
  }, {randmat(3, 2, rng), randmat(3, 3, rng)});
  check([](Graph&, const std::vector<Value>& in) {
    return mean_all(square(concat_rows({in[0], in[1]})));
  }, {randmat(2, 3, rng), randmat(4, 3, rng)});
  check([](Graph&, const std::vector<Value>& in) {
    return sum_all(max_over_rows(in[0]));
  }, {randmat(5, 4, rng)});
  check([](Graph&, const std::vector<Value>& in) {
    return sum_all(group_max(in[0], 3));
  }, {randmat(6, 4, rng)});
  check([](Graph&, const std::vector<Value>& in) {
    return mean_all(square(gather_rows(in[0], {0, 2, 2, 1})));
  }, {randmat(3, 4, rng)});
  check([](Graph&, const std::vector<Value>& in) {
    return mean_all(square(tile_rows(in[0], 3)));
  }, {randmat(2, 3, rng)});
  check([](Graph&, const std::vector<Value>& in) {
    return mean_all(square(repeat_interleave_rows(in[0], 4)));
  }, {randmat(2, 3, rng)});
  check([](Graph&, const std::vector<Value>& in) {
    return mean_all(square(reshape(in[0], 6, 2)));
  }, {randmat(3, 4, rng)});
  check([](Graph&, const std::vector<Value>& in) {
    return mean_all(sqrt_clamped(row_sum(square(in[0]))));
  }, {(randmat(4, 3, rng).array() + 3.0).matrix().eval()});
  check([](Graph&, const std::vector<Value>& in) {
    return mean_all(square(slice_cols(in[0], 1, 2)));
  }, {randmat(4, 5, rng)});
  check([](Graph&, const std::vector<Value>& in) {
    return mean_all(square(transpose(in[0])));
  }, {randmat(3, 5, rng)});
  check([](Graph&, const std::vector<Value>& in) {
    return mean_all(square(sub(in[0], in[1])));
  }, {randmat(3, 3, rng), randmat(3, 3, rng)});
  check([](Graph&, const std::vector<Value>& in) {
    return mean_all(interp3(in[0], in[1], in[2]));
  }, {randmat(5, 3, rng), randmat(7, 3, rng), randmat(7, 4, rng)}, 1e-4);
}

TEST_CASE("gradient check rejects bad eps and detects nondeterminism") {
  Rng rng(11);
  const MatX x = randmat(2, 2, rng);
  const GradCheckFn fn = [](Graph&, const std::vector<Value>& in) {
    return sum_all(in[0]);
  };
  CHECK_THROWS_AS(gradient_check(fn, {x}, 1e-2), InvalidInputError);

  int calls = 0;
  const GradCheckFn shifty = [&calls](Graph& g, const std::vector<Value>& in) {
    return add(sum_all(in[0]), g.scalar(static_cast<double>(calls++)));
  };
  CHECK_THROWS_AS(gradient_check(shifty, {x}, 1e-5), OracleViolationError);
}

TEST_CASE("softmax rows stay positive and normalized on random input") {
  Rng rng(12);
  Graph g;
  const Value y = row_softmax(g.constant(randmat(20, 9, rng, 3.0)));
  for (int i = 0; i < 20; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 9; ++j) {
      CHECK(y.val()(i, j) > 0.0);
      sum += y.val()(i, j);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("shape mismatches are rejected") {
  Rng rng(13);
  Graph g;
  const Value a = g.var(randmat(2, 3, rng));
  const Value b = g.var(randmat(3, 2, rng));
  CHECK_THROWS_AS(add(a, b), InvalidShapeError);
  CHECK_THROWS_AS(matmul(a, a), InvalidShapeError);
  CHECK_THROWS_AS(reshape(a, 4, 4), InvalidShapeError);
  CHECK_THROWS_AS(group_max(a, 4), InvalidShapeError);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged and advances the counter") {
  Tensor p(MatX::Constant(2, 2, 1.5), true);
  Adam opt;
  opt.step("p", p, MatX::Zero(2, 2), 1e-3);
  CHECK((p.value - MatX::Constant(2, 2, 1.5)).norm() == 0.0);
  CHECK(opt.slot("p")->step == 1);
}

TEST_CASE("adam: first step from zero moments moves by about -lr sign(g)") {
  Tensor p(MatX::Zero(1, 3), true);
  MatX grad(1, 3);
  grad << 0.7, -2.0, 0.001;
  Adam opt;
  opt.step("p", p, grad, 1e-3);
  for (int j = 0; j < 3; ++j) {
    const double expected = -1e-3 * (grad(0, j) > 0 ? 1.0 : -1.0);
    CHECK(p.value(0, j) == doctest::Approx(expected).epsilon(1e-4));
  }
}

TEST_CASE("adam: constant gradient converges to steps of -lr sign(g)") {
  Tensor p(MatX::Zero(1, 2), true);
  MatX grad(1, 2);
  grad << 0.3, -1.7;
  Adam opt;
  double prev0 = 0.0;
  for (int i = 0; i < 1000; ++i) {
    prev0 = p.value(0, 0);
    opt.step("p", p, grad, 1e-3);
  }
  CHECK(p.value(0, 0) - prev0 == doctest::Approx(-1e-3).epsilon(1e-6));
  CHECK(p.value(0, 1) > 0.0);  // moved opposite the negative gradient
}

TEST_CASE("adam: non-finite gradients abort with the parameter name") {
  Tensor p(MatX::Zero(1, 1), true);
  MatX bad = MatX::Constant(1, 1, std::numeric_limits<double>::quiet_NaN());
  Adam opt;
  try {
    opt.step("disp/out_w", p, bad, 1e-3);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("disp/out_w") != std::string::npos);
  }
}

TEST_CASE("checkpoint: named tensors round-trip bitwise") {
  Rng rng(14);
  std::map<std::string, Tensor> params;
  params.emplace("alpha/w", Tensor(randmat(3, 5, rng), true));
  params.emplace("beta/b", Tensor(randmat(1, 7, rng), true));
  const std::string path =
      (std::filesystem::temp_directory_path() / "skb_ckpt_test.bin").string();
  save_checkpoint(path, params);
  const auto back = load_checkpoint(path);
  REQUIRE(back.size() == 2);
  CHECK((back.at("alpha/w").value - params.at("alpha/w").value).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.at("beta/b").value - params.at("beta/b").value).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/nowhere.bin"), IoError);
  std::filesystem::remove(path);
}
