#include "skelbridge/ad/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace skelbridge::ad {

namespace {

double eval_loss(const GradCheckFn& fn, const std::vector<MatX>& inputs) {
  Graph g;
  std::vector<Value> vals;
  vals.reserve(inputs.size());
  for (const MatX& m : inputs) vals.push_back(g.constant(m));
  Value loss = fn(g, vals);
  if (loss.rows() != 1 || loss.cols() != 1)
    throw InvalidInputError("gradient_check: function must return a scalar");
  return loss.val()(0, 0);
}

}  // namespace

double gradient_check(const GradCheckFn& fn, const std::vector<MatX>& inputs, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3))
    throw InvalidInputError("gradient_check: eps must lie in [1e-7, 1e-3]");
  for (const MatX& m : inputs)
    if (!m.allFinite()) throw InvalidInputError("gradient_check: non-finite input");

  // analytic pass (twice, to detect nondeterminism)
  std::vector<MatX> analytic;
  double loss0;
  {
    Graph g;
    std::vector<Value> vals;
    for (const MatX& m : inputs) vals.push_back(g.var(m));
    Value loss = fn(g, vals);
    if (loss.rows() != 1 || loss.cols() != 1)
      throw InvalidInputError("gradient_check: function must return a scalar");
    loss0 = loss.val()(0, 0);
    g.backward(loss);
    for (Value v : vals) analytic.push_back(g.grad(v));
  }
  const double loss1 = eval_loss(fn, inputs);
  if (loss0 != loss1)
    throw OracleViolationError("gradient_check: function is nondeterministic");

  double max_rel = 0.0;
  std::vector<MatX> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index r = 0; r < inputs[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < inputs[i].cols(); ++c) {
        const double orig = probe[i](r, c);
        probe[i](r, c) = orig + eps;
        const double fp = eval_loss(fn, probe);
        probe[i](r, c) = orig - eps;
        const double fm = eval_loss(fn, probe);
        probe[i](r, c) = orig;
        const double cd = (fp - fm) / (2.0 * eps);
        const double a = analytic[i](r, c);
        const double rel = std::abs(a - cd) / std::max({std::abs(a), std::abs(cd), 1e-8});
        max_rel = std::max(max_rel, rel);
      }
    }
  }
  return max_rel;
}

}  // namespace skelbridge::ad
