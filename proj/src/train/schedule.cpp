#include "skelbridge/train/schedule.hpp"

#include <algorithm>

namespace skelbridge::train {

double lr_on_plateau(PlateauState& state, double val_loss, double current_lr, double factor,
                     int patience, double floor) {
  if (val_loss < state.best) {
    state.best = val_loss;
    state.epochs_since_improve = 0;
    return current_lr;
  }
  ++state.epochs_since_improve;
  if (state.epochs_since_improve >= patience) {
    state.epochs_since_improve = 0;
    return std::max(current_lr * factor, floor);
  }
  return current_lr;
}

}  // namespace skelbridge::train
