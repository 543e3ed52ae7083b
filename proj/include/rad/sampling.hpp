// Scheduled sampling for a parallel-input model: a first teacher-forced pass
// (gradients off) produces per-position distributions, each response position
// is then independently replaced, with probability growing over epochs, by the
// uniform average of its top-K candidate embeddings. The result feeds the
// second, gradient-carrying pass.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "rad/model.hpp"
#include "rad/tensor.hpp"

namespace rad {

struct SampleSchedule {
  std::size_t top_k = 5;
  double mu = 4.0;
  std::size_t epoch = 0;  // 0-based
  // Source of Uniform(0,1) draws, one per response position.
  std::function<double()> uniform01;

  void validate() const;
  static SampleSchedule from_rng(std::size_t top_k, double mu, std::size_t epoch, Rng& rng);
};

struct ReconstructedResponse {
  Tensor E_r;                                // n x L, mix of truth and candidates
  std::vector<std::uint8_t> replaced_mask;   // 1 where the candidate row was taken
  Tensor replacements;                       // n x L constants; zero rows where unused
};

// p = 1 / (1 + mu / e^{epoch/mu}): the chance a position is replaced.
double replace_probability(const SampleSchedule& sched);

// Uniform average of the embedding rows of the K most probable tokens, ties
// broken toward the lower token id. The result is a constant (no gradients).
Tensor candidate_embedding(const Tensor& probs_row, const Tensor& table, std::size_t k);

// Stage 1 + per-position replacement. Rows kept from response_emb retain its
// gradient history; replaced rows enter as constants.
ReconstructedResponse reconstruct(const Tensor& context_emb, const Tensor& response_emb,
                                  const ModelParams& params, const ModelConfig& config,
                                  const SampleSchedule& sched);

}  // namespace rad
