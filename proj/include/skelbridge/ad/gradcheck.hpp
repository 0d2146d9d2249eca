#pragma once

#include <functional>
#include <vector>

#include "skelbridge/ad/graph.hpp"

namespace skelbridge::ad {

using GradCheckFn = std::function<Value(Graph&, const std::vector<Value>&)>;

/// Central-difference verification of reverse-mode gradients. Builds the
/// function twice to detect nondeterminism (OracleViolationError on loss
/// mismatch), then compares the analytic gradient of every input entry with
/// (f(x+eps) - f(x-eps)) / 2eps. Returns the maximum of
/// |analytic - cd| / max(|analytic|, |cd|, 1e-8). eps must lie in
/// [1e-7, 1e-3].
double gradient_check(const GradCheckFn& fn, const std::vector<MatX>& inputs, double eps);

}  // namespace skelbridge::ad
