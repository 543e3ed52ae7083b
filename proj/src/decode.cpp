#include "rad/decode.hpp"

#include "rad/data.hpp"
#include "rad/errors.hpp"

namespace rad {

void GenerationConfig::validate() const {
  if (max_new_tokens == 0)
    throw ContractError("GenerationConfig: max_new_tokens must be positive");
}

TokenId argmax_token(const Tensor& distribution) {
  const std::vector<double>& v = distribution.values();
  if (v.empty()) throw ContractError("argmax_token: empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<TokenId>(best);
}

std::vector<TokenId> generate(const std::vector<TokenId>& context,
                              const ModelParams& params, const ModelConfig& config,
                              const RaParams* ra, const RaConfig* ra_config,
                              const GenerationConfig& gen) {
  gen.validate();
  if (context.empty()) throw ContractError("generate: context is empty");
  if ((ra == nullptr) != (ra_config == nullptr))
    throw ContractError("generate: ra params and ra config go together");
  if (context.size() >= config.max_positions)
    throw ContractError("generate: context fills the whole position budget");

  NoGradGuard inference;
  Tensor ex = embed(context, params);
  Tensor context_slot = ra ? predict_response_aware(ex, *ra) : ex;

  std::vector<TokenId> out;
  while (out.size() < gen.max_new_tokens &&
         context.size() + out.size() < config.max_positions) {
    Tensor so_far = out.empty() ? Tensor() : embed(out, params);
    ForwardOutput fo = forward(context_slot, so_far, params, config);
    const TokenId next = argmax_token(next_token_distribution(fo, params));
    out.push_back(next);
    if (next == kEosId) break;
  }
  return out;
}

}  // namespace rad
