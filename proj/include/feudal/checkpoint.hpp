#pragma once

#include <string>

#include "feudal/nn.hpp"

namespace feudal {

/// Parameter checkpoint: a plain-text shape manifest followed by the raw
/// 64-bit little-endian float payload in manifest order. Round-trips are
/// bit-exact.
///
///   feudal-checkpoint v1
///   tensors <count>
///   <name> <ndims> <dim0> <dim1> ...
///   data
///   <8 * total_elements bytes>
void save_checkpoint(const std::string& path, const ParamList& params);

/// Loads into an existing registry. Any mismatch in tensor names, order or
/// shapes is an incompatibility error.
void load_checkpoint(const std::string& path, ParamList& params);

}  // namespace feudal
