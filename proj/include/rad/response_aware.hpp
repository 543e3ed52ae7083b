// Response awareness: a cross-attention network summarizes the response into
// context-aligned vectors (training only), a per-position feedforward predicts
// those vectors from the context alone (available at generation time), and a
// decaying factor merges the two into the vectors the model actually consumes.
// An MSE loss pulls the prediction toward the attention output, which enters
// that loss as a constant target.
#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "rad/rng.hpp"
#include "rad/tensor.hpp"

namespace rad {

struct RaConfig {
  std::size_t embed_dim = 64;
  std::size_t n_heads = 4;
  std::size_t hidden_dim = 128;  // predictor hidden width, default 2x embed

  void validate() const;
  std::size_t head_dim() const { return embed_dim / n_heads; }
};

struct RaParams {
  // cross-attention: context rows query the response
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  // per-position predictor
  Tensor w1, b1, w2, b2;

  static RaParams init(const RaConfig& config, Rng& rng);
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  std::size_t param_count() const;
  void zero_grads();
};

struct LossBreakdown {
  Tensor loss_M;
  Tensor loss_RA;
  double gamma = 0.5;
  Tensor loss_total;
};

// Multi-head attention, no mask: each context row attends over all response
// rows. Returns one row per context position.
Tensor response_aware(const Tensor& E_r, const Tensor& E_x, const RaParams& params,
                      const RaConfig& config);

// One-hidden-layer feedforward applied independently to each context row.
Tensor predict_response_aware(const Tensor& E_x, const RaParams& params);

// lambda*E_ra + (1-lambda)*E_ra_pred.
Tensor merge(const Tensor& E_ra, const Tensor& E_ra_pred, double lambda);

// Mean squared deviation of the prediction from the attention output; the
// target contributes no gradients.
Tensor ra_loss(const Tensor& E_ra_pred, const Tensor& E_ra);

// gamma*loss_M + (1-gamma)*loss_RA.
Tensor total_loss(const Tensor& loss_M, const Tensor& loss_RA, double gamma);

}  // namespace rad
