#pragma once

#include <map>
#include <string>

#include "skelbridge/ad/graph.hpp"

namespace skelbridge::ad {

/// Binary checkpoint. Layout (all integers little-endian, documented in
/// docs/formats.md):
///   magic "SKBCKPT\0" (8 bytes), u32 version (= 1), u32 parameter count,
///   then per parameter: u32 name length, name bytes, u32 rows, u32 cols,
///   rows*cols IEEE-754 doubles, row-major, little-endian.
void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& params);

std::map<std::string, Tensor> load_checkpoint(const std::string& path);

}  // namespace skelbridge::ad
