// Experiment configuration as dotted key=value settings. One struct bundles
// the per-module configs; values land in it from three layers in order:
// built-in defaults, a config file, then command-line overrides. Unknown keys
// are rejected, never ignored.
#pragma once

#include <string>
#include <vector>

#include "rad/decode.hpp"
#include "rad/model.hpp"
#include "rad/response_aware.hpp"
#include "rad/train.hpp"

namespace rad {

struct ExperimentConfig {
  ModelConfig model;        // vocab_size is filled from the corpus at run time
  RaConfig ra;              // embed_dim follows model.embed_dim, see finalize()
  TrainConfig train;
  GenerationConfig generation;
  std::size_t vocab_limit = 1000;  // vocabulary cap when building from a corpus

  // Syncs the derived fields. Call once after all settings are applied.
  void finalize() { ra.embed_dim = model.embed_dim; }
};

// Every assignable key, sorted.
const std::vector<std::string>& config_keys();

// Applies one setting; throws ParseError on an unknown key or a value that
// does not parse as the key's type.
void apply_setting(ExperimentConfig& cfg, const std::string& key,
                   const std::string& value);

// Applies "key=value" strings, e.g. collected from repeated --set flags.
void apply_overrides(ExperimentConfig& cfg,
                     const std::vector<std::string>& assignments);

// Layer a file onto cfg: one "key = value" per line, '#' starts a comment,
// blank lines allowed. Errors carry the line number.
void load_config_file(ExperimentConfig& cfg, const std::string& path);

}  // namespace rad
