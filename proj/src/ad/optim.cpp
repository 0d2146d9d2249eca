#include "skelbridge/ad/optim.hpp"

#include <cmath>

namespace skelbridge::ad {

void Adam::step(const std::string& name, Tensor& param, const MatX& grad, double lr) {
  if (grad.rows() != param.value.rows() || grad.cols() != param.value.cols())
    throw InvalidShapeError("adam: gradient shape mismatch for parameter '" + name + "'");
  if (!grad.allFinite())
    throw NumericError("training divergence: non-finite gradient for parameter '" + name + "'");

  AdamSlot& s = slots_[name];
  if (s.m.size() == 0) {
    s.m = MatX::Zero(grad.rows(), grad.cols());
    s.v = MatX::Zero(grad.rows(), grad.cols());
  }
  ++s.step;
  s.m = cfg_.beta1 * s.m + (1.0 - cfg_.beta1) * grad;
  s.v = cfg_.beta2 * s.v.array().matrix() + (1.0 - cfg_.beta2) * grad.array().square().matrix();
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.step));
  param.value.array() -=
      lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + cfg_.eps);
}

}  // namespace skelbridge::ad
