#pragma once

#include <string>

#include "ofnlab/tensor.hpp"

namespace ofn {

/// JSON map from parameter path to {shape, data}. Doubles are written with
/// 17 significant digits, so a save/load cycle is exact.
void save_checkpoint(const ParamMap& params, const std::string& path);
ParamMap load_checkpoint(const std::string& path);

}  // namespace ofn
