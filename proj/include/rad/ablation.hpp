// Four-variant experiment grid. Every combination of the two mechanisms
// trains from the same seed, which pins the same initialization stream and
// the same batch order, so row-to-row differences isolate the mechanisms.
// Each trained variant then generates on a held-out set and is scored with
// the shared metric suite.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rad/data.hpp"
#include "rad/decode.hpp"
#include "rad/metrics.hpp"
#include "rad/train.hpp"

namespace rad {

struct AblationConfig {
  GenerationConfig generation;
  bool parallel = false;  // one thread per variant when set
};

struct AblationRow {
  std::string name;
  bool use_ss = false;
  bool use_ra = false;
  TrainReport train;
  MetricsReport eval;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::uint64_t seed = 0;

  std::string to_json() const;
  // Variant-per-row table over the five metric columns, values x100.
  std::string to_text() const;
};

// Trains base, +SS, +RA and +SS+RA from base_config (its use_ss/use_ra are
// overridden per variant, its checkpoint settings are ignored) and scores
// each variant's generations against the held-out responses.
AblationReport run_ablation(const std::vector<RawPair>& train_pairs,
                            const std::vector<RawPair>& eval_pairs,
                            const Vocabulary& vocab, const ModelConfig& mcfg,
                            const RaConfig& rcfg, const TrainConfig& base_config,
                            const AblationConfig& acfg = {});

}  // namespace rad
