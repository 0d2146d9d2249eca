#pragma once

#include <map>
#include <string>

#include "skelbridge/ad/graph.hpp"

namespace skelbridge::ad {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamSlot {
  MatX m;
  MatX v;
  long step = 0;
};

/// Adam with bias correction. Deterministic; moment slots are created on
/// first use per parameter name. A non-finite gradient raises NumericError
/// naming the offending parameter.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::string& name, Tensor& param, const MatX& grad, double lr);

  const AdamSlot* slot(const std::string& name) const {
    auto it = slots_.find(name);
    return it == slots_.end() ? nullptr : &it->second;
  }
  void reset() { slots_.clear(); }

 private:
  AdamConfig cfg_;
  std::map<std::string, AdamSlot> slots_;
};

}  // namespace skelbridge::ad
