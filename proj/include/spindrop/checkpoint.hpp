#pragma once

#include <string>

#include "spindrop/net.hpp"

namespace spindrop {

// Versioned little-endian binary checkpoint with shape headers. A JSON
// sidecar (path + ".json") records the hyperparameters and placement for
// human inspection. Round-trips bit-exactly: a loaded net produces outputs
// identical to the saved one.
void save_checkpoint(const std::string& path, const BinaryConvNet& net);
BinaryConvNet load_checkpoint(const std::string& path);

}  // namespace spindrop
