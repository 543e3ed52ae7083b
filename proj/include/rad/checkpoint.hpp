// Checkpoint container: a magic line, one JSON header line (configs, format
// version, tensor directory with shapes and byte offsets), then the tensor
// payload as raw little-endian 64-bit floats in directory order. Round-trips
// are bit-exact, and identical parameters serialize to identical bytes.
#pragma once

#include <string>

#include "rad/model.hpp"
#include "rad/response_aware.hpp"

namespace rad {

struct LoadedCheckpoint {
  ModelConfig model_config;
  ModelParams params;
  bool has_ra = false;
  RaConfig ra_config;
  RaParams ra_params;
};

// Writes atomically (temp file + rename). Pass ra/ra_config together or not
// at all; a checkpoint without them loads with has_ra == false.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ModelConfig& config, const RaParams* ra = nullptr,
                     const RaConfig* ra_config = nullptr);

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace rad
