// Greedy generation. The context slot is either the raw context embeddings or,
// when auxiliary parameters are supplied, the response-aware vectors predicted
// from the context alone; generated tokens re-enter the response slot one at a
// time until the end marker or the length cap.
#pragma once

#include <cstddef>
#include <vector>

#include "rad/model.hpp"
#include "rad/response_aware.hpp"

namespace rad {

struct GenerationConfig {
  std::size_t max_new_tokens = 32;
  void validate() const;
};

// Returns the generated tokens, including the end marker when one was
// produced. Pass ra and ra_config together to decode through the predicted
// response-aware context; pass neither for the plain variant. Generation also
// stops when the position budget of the model is exhausted.
std::vector<TokenId> generate(const std::vector<TokenId>& context,
                              const ModelParams& params, const ModelConfig& config,
                              const RaParams* ra, const RaConfig* ra_config,
                              const GenerationConfig& gen);

// Greedy pick over one distribution row; ties resolve to the lowest id.
TokenId argmax_token(const Tensor& distribution);

}  // namespace rad
