#include "rad/response_aware.hpp"

#include <cmath>

#include "rad/errors.hpp"

namespace rad {

void RaConfig::validate() const {
  if (embed_dim == 0 || n_heads == 0 || hidden_dim == 0)
    throw ContractError("RaConfig: all dimensions must be positive");
  if (embed_dim % n_heads != 0)
    throw ContractError("RaConfig: embed_dim " + std::to_string(embed_dim) +
                        " not divisible by n_heads " + std::to_string(n_heads));
}

RaParams RaParams::init(const RaConfig& config, Rng& rng) {
  config.validate();
  const std::size_t l = config.embed_dim, h = config.hidden_dim;
  auto w = [&rng](std::size_t r, std::size_t c) {
    return Tensor::randn({r, c}, rng, 0.02, true);
  };
  RaParams p;
  p.wq = w(l, l);
  p.bq = Tensor::zeros({l}, true);
  p.wk = w(l, l);
  p.bk = Tensor::zeros({l}, true);
  p.wv = w(l, l);
  p.bv = Tensor::zeros({l}, true);
  p.wo = w(l, l);
  p.bo = Tensor::zeros({l}, true);
  p.w1 = w(l, h);
  p.b1 = Tensor::zeros({h}, true);
  p.w2 = w(h, l);
  p.b2 = Tensor::zeros({l}, true);
  return p;
}

void RaParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("ra_attention.wq", wq);
  fn("ra_attention.bq", bq);
  fn("ra_attention.wk", wk);
  fn("ra_attention.bk", bk);
  fn("ra_attention.wv", wv);
  fn("ra_attention.bv", bv);
  fn("ra_attention.wo", wo);
  fn("ra_attention.bo", bo);
  fn("ra_predictor.w1", w1);
  fn("ra_predictor.b1", b1);
  fn("ra_predictor.w2", w2);
  fn("ra_predictor.b2", b2);
}

void RaParams::for_each(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<RaParams*>(this)->for_each(
      [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

std::size_t RaParams::param_count() const {
  std::size_t n = 0;
  for_each([&n](const std::string&, const Tensor& t) { n += t.numel(); });
  return n;
}

void RaParams::zero_grads() {
  for_each([](const std::string&, Tensor& t) { t.zero_grad(); });
}

Tensor response_aware(const Tensor& E_r, const Tensor& E_x, const RaParams& params,
                      const RaConfig& config) {
  const std::size_t l = config.embed_dim;
  if (E_x.cols() != l || E_r.cols() != l)
    throw DimensionError("response_aware: inputs must have " + std::to_string(l) +
                         " columns, got " + shape_str(E_x.shape()) + " and " +
                         shape_str(E_r.shape()));
  if (E_r.rows() == 0)
    throw DimensionError("response_aware: response must have at least one row");

  const std::size_t heads = config.n_heads, dh = config.head_dim();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor q = add_row_bias(matmul(E_x, params.wq), params.bq);
  Tensor k = add_row_bias(matmul(E_r, params.wk), params.bk);
  Tensor v = add_row_bias(matmul(E_r, params.wv), params.bv);
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    Tensor weights = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt_dh));
    head_outputs.push_back(matmul(weights, vh));
  }
  Tensor merged = heads == 1 ? head_outputs[0] : concat_cols(head_outputs);
  return add_row_bias(matmul(merged, params.wo), params.bo);
}

Tensor predict_response_aware(const Tensor& E_x, const RaParams& params) {
  Tensor hidden = gelu(add_row_bias(matmul(E_x, params.w1), params.b1));
  return add_row_bias(matmul(hidden, params.w2), params.b2);
}

Tensor merge(const Tensor& E_ra, const Tensor& E_ra_pred, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ContractError("merge: lambda must lie in [0, 1], got " + std::to_string(lambda));
  if (E_ra.shape() != E_ra_pred.shape())
    throw DimensionError("merge: shape mismatch (" + shape_str(E_ra.shape()) + " vs " +
                         shape_str(E_ra_pred.shape()) + ")");
  return add(scale(E_ra, lambda), scale(E_ra_pred, 1.0 - lambda));
}

Tensor ra_loss(const Tensor& E_ra_pred, const Tensor& E_ra) {
  if (E_ra_pred.shape() != E_ra.shape())
    throw DimensionError("ra_loss: shape mismatch (" + shape_str(E_ra_pred.shape()) +
                         " vs " + shape_str(E_ra.shape()) + ")");
  Tensor diff = sub(E_ra_pred, E_ra.detach());
  return mean_all(mul(diff, diff));
}

Tensor total_loss(const Tensor& loss_M, const Tensor& loss_RA, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw ContractError("total_loss: gamma must lie in [0, 1], got " + std::to_string(gamma));
  return add(scale(loss_M, gamma), scale(loss_RA, 1.0 - gamma));
}

}  // namespace rad
