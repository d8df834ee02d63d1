#pragma once

#include <string>

#include "audeform/backbone.hpp"

namespace audeform {

// Checkpoint format: magic "DCKP", u32 version = 1, length-prefixed UTF-8
// model config text, then one record per parameter: u32 name length + bytes,
// u32 rank, rank u32 extents, float32 payload. All little-endian; round-trips
// bit-exactly at float32.
void save_checkpoint(Model& model, const std::string& path);

// Config text embedded in the checkpoint, parsed back into a ModelConfig.
ModelConfig read_checkpoint_config(const std::string& path);

// Loads parameter values into an already-constructed model; names and shapes
// must match exactly.
void load_checkpoint(Model& model, const std::string& path);

}  // namespace audeform
