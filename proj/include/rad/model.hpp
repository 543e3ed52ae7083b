// Decoder-only transformer over a concatenated context+response sequence.
//
// The forward pass takes embedding-space matrices (token rows, no positions)
// for the context and response slots, so callers may substitute merged or
// reconstructed vectors for either slot. Position rows are attached inside
// forward over the concatenated sequence; a full causal mask applies
// throughout. Logits for response step t come from the hidden state at the
// position immediately before response token t, so each distribution predicts
// the next token without seeing it.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rad/rng.hpp"
#include "rad/tensor.hpp"

namespace rad {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ff_dim = 256;
  std::size_t max_positions = 128;
  double dropout_rate = 0.0;

  void validate() const;
  std::size_t head_dim() const { return embed_dim / n_heads; }
};

struct LayerParams {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor w1, b1, w2, b2;
};

struct ModelParams {
  Tensor token_embeddings;     // V x L
  Tensor position_embeddings;  // max_positions x L
  std::vector<LayerParams> layers;
  Tensor final_norm_gain, final_norm_bias;
  Tensor output_w;  // L x V
  Tensor output_b;  // V

  static ModelParams init(const ModelConfig& config, Rng& rng);

  // Visits every learned tensor in a fixed order under a stable name.
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  std::size_t param_count() const;
  void zero_grads();
};

struct ForwardOutput {
  Tensor H;       // (m+n) x L hidden states after the final norm
  Tensor logits;  // n x V, one row per response position
  Tensor probs;   // n x V, row softmax of logits
};

// Token-embedding rows for a sequence of ids (no position information).
Tensor embed(const std::vector<TokenId>& ids, const ModelParams& params);

// Concatenates the two slots and adds position rows: context row i receives
// position row i, response row j receives position row m+j.
Tensor assemble_input(const Tensor& context_vectors, const Tensor& response_vectors,
                      const ModelParams& params, const ModelConfig& config);

// dropout_rng arms dropout at config.dropout_rate; pass nullptr to run
// deterministically (generation, evaluation, gradient checks).
ForwardOutput forward(const Tensor& context_vectors, const Tensor& response_vectors,
                      const ModelParams& params, const ModelConfig& config,
                      Rng* dropout_rng = nullptr);

// Mean negative log likelihood of targets under probs over unmasked rows.
Tensor nll_loss(const Tensor& probs, const std::vector<TokenId>& targets,
                const std::vector<std::uint8_t>& keep);

// Distribution over the next token implied by the final hidden state row.
Tensor next_token_distribution(const ForwardOutput& out, const ModelParams& params);

}  // namespace rad
