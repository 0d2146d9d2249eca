#pragma once

#include <string>
#include <vector>

#include "skelbridge/common.hpp"

namespace skelbridge::net {

struct NetConfig {
  int n_points = 256;                         // N
  int levels = 3;                             // L
  std::vector<int> widths = {32, 64, 128};    // C_i
  std::vector<double> radii = {0.1, 0.2, 0.4};
  int group_size = 16;                        // ball-query cap per center
  int heads = 4;                              // h; d_i = C_i / h
  int upsample = 4;                           // fixed by the pipeline
  std::vector<int> head_widths = {128, 64};   // skeleton-head hidden sizes
  int disp_width = 64;                        // per-copy width after the grouped layer
  std::vector<int> adjust_widths = {64, 128}; // point MLP of the adjustment module
  int disc_seeds = 8;                         // m
  int disc_patch = 32;                        // n
  double disc_radius_frac = 0.1;              // r = frac x bbox diagonal
  bool disc_use_normals = true;
  bool attention = true;                      // off reproduces the C1/C2 ablations
  bool adjust = true;                         // off reproduces the C1/C3 ablations

  int feature_width() const;  // sum of C_i
  void validate() const;

  static NetConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

}  // namespace skelbridge::net
