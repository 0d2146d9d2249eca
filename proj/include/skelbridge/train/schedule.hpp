#pragma once

#include <limits>

namespace skelbridge::train {

struct PlateauState {
  double best = std::numeric_limits<double>::infinity();
  int epochs_since_improve = 0;
};

/// Plateau decay: strict improvement resets the counter; `patience`
/// consecutive non-improving epochs halve the step size (times `factor`),
/// never below `floor`. Returns the step size to use next.
double lr_on_plateau(PlateauState& state, double val_loss, double current_lr, double factor,
                     int patience, double floor);

}  // namespace skelbridge::train
