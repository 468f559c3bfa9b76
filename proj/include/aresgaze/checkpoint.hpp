#pragma once

#include <map>

#include "aresgaze/gazenet.hpp"

namespace ag {

/// key=value serialization of a network configuration; the checkpoint
/// stores it verbatim and load verifies it against the target model.
std::string serialize_config(const GazeNetConfig& cfg);
GazeNetConfig parse_config(const std::string& text);

/// Binary checkpoint: magic "ARSG", format version, config echo, then
/// named tensors (params + BN running statistics) sorted lexicographically,
/// raw little-endian doubles. Optimizer velocities ride in an optional
/// trailing section.
void save_checkpoint(const GazeNet& net, const std::string& path,
                     const std::map<std::string, TensorPtr>* optimizer_state = nullptr);

/// Restores parameters and running statistics bit-exactly. Throws on
/// magic/version mismatch, config mismatch (naming the first differing
/// field), shape mismatch or truncation.
void load_checkpoint(GazeNet& net, const std::string& path,
                     std::map<std::string, TensorPtr>* optimizer_state = nullptr);

/// Reads only the config echo (to rebuild a model before loading).
GazeNetConfig read_checkpoint_config(const std::string& path);

}  // namespace ag
