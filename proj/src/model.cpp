#include "rad/model.hpp"

#include <cmath>

#include "rad/errors.hpp"

namespace rad {

void ModelConfig::validate() const {
  if (vocab_size == 0) throw ContractError("ModelConfig: vocab_size must be positive");
  if (embed_dim == 0 || n_layers == 0 || n_heads == 0 || ff_dim == 0 || max_positions == 0)
    throw ContractError("ModelConfig: all dimensions must be positive");
  if (embed_dim % n_heads != 0)
    throw ContractError("ModelConfig: embed_dim " + std::to_string(embed_dim) +
                        " not divisible by n_heads " + std::to_string(n_heads));
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ContractError("ModelConfig: dropout_rate must lie in [0, 1)");
}

namespace {

constexpr double kInitStd = 0.02;

Tensor weight(std::vector<std::size_t> shape, Rng& rng) {
  return Tensor::randn(std::move(shape), rng, kInitStd, true);
}

Tensor zeros_p(std::vector<std::size_t> shape) {
  return Tensor::zeros(std::move(shape), true);
}

Tensor ones_p(std::size_t n) {
  Tensor t = Tensor::full({n}, 1.0);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  const std::size_t v = config.vocab_size, l = config.embed_dim, f = config.ff_dim;
  ModelParams p;
  p.token_embeddings = weight({v, l}, rng);
  p.position_embeddings = weight({config.max_positions, l}, rng);
  p.layers.resize(config.n_layers);
  for (LayerParams& lp : p.layers) {
    lp.ln1_gain = ones_p(l);
    lp.ln1_bias = zeros_p({l});
    lp.wq = weight({l, l}, rng);
    lp.bq = zeros_p({l});
    lp.wk = weight({l, l}, rng);
    lp.bk = zeros_p({l});
    lp.wv = weight({l, l}, rng);
    lp.bv = zeros_p({l});
    lp.wo = weight({l, l}, rng);
    lp.bo = zeros_p({l});
    lp.ln2_gain = ones_p(l);
    lp.ln2_bias = zeros_p({l});
    lp.w1 = weight({l, f}, rng);
    lp.b1 = zeros_p({f});
    lp.w2 = weight({f, l}, rng);
    lp.b2 = zeros_p({l});
  }
  p.final_norm_gain = ones_p(l);
  p.final_norm_bias = zeros_p({l});
  p.output_w = weight({l, v}, rng);
  p.output_b = zeros_p({v});
  return p;
}

void ModelParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("token_embeddings", token_embeddings);
  fn("position_embeddings", position_embeddings);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string pre = "layer" + std::to_string(i) + ".";
    LayerParams& lp = layers[i];
    fn(pre + "ln1_gain", lp.ln1_gain);
    fn(pre + "ln1_bias", lp.ln1_bias);
    fn(pre + "wq", lp.wq);
    fn(pre + "bq", lp.bq);
    fn(pre + "wk", lp.wk);
    fn(pre + "bk", lp.bk);
    fn(pre + "wv", lp.wv);
    fn(pre + "bv", lp.bv);
    fn(pre + "wo", lp.wo);
    fn(pre + "bo", lp.bo);
    fn(pre + "ln2_gain", lp.ln2_gain);
    fn(pre + "ln2_bias", lp.ln2_bias);
    fn(pre + "w1", lp.w1);
    fn(pre + "b1", lp.b1);
    fn(pre + "w2", lp.w2);
    fn(pre + "b2", lp.b2);
  }
  fn("final_norm_gain", final_norm_gain);
  fn("final_norm_bias", final_norm_bias);
  fn("output_w", output_w);
  fn("output_b", output_b);
}

void ModelParams::for_each(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<ModelParams*>(this)->for_each(
      [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

std::size_t ModelParams::param_count() const {
  std::size_t n = 0;
  for_each([&n](const std::string&, const Tensor& t) { n += t.numel(); });
  return n;
}

void ModelParams::zero_grads() {
  for_each([](const std::string&, Tensor& t) { t.zero_grad(); });
}

Tensor embed(const std::vector<TokenId>& ids, const ModelParams& params) {
  return gather_rows(params.token_embeddings, ids);
}

Tensor assemble_input(const Tensor& context_vectors, const Tensor& response_vectors,
                      const ModelParams& params, const ModelConfig& config) {
  const std::size_t m = context_vectors.rows();
  const std::size_t n = response_vectors.rows();
  const std::size_t l = config.embed_dim;
  if (m == 0) throw ContractError("assemble_input: context must not be empty");
  if (context_vectors.cols() != l || (n > 0 && response_vectors.cols() != l))
    throw DimensionError("assemble_input: input width must equal embed_dim " +
                         std::to_string(l));
  if (m + n > config.max_positions)
    throw CapacityError("assemble_input: sequence of " + std::to_string(m + n) +
                        " exceeds max_positions " + std::to_string(config.max_positions));
  Tensor seq = n > 0 ? concat_rows({context_vectors, response_vectors}) : context_vectors;
  Tensor pos = slice_rows(params.position_embeddings, 0, m + n);
  return add(seq, pos);
}

namespace {

Tensor attention_block(const Tensor& x, const LayerParams& lp, const ModelConfig& config,
                       Rng* dropout_rng) {
  const std::size_t heads = config.n_heads, dh = config.head_dim();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor q = add_row_bias(matmul(x, lp.wq), lp.bq);
  Tensor k = add_row_bias(matmul(x, lp.wk), lp.bk);
  Tensor v = add_row_bias(matmul(x, lp.wv), lp.bv);
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
    Tensor weights = causal_softmax_rows(scores);
    if (dropout_rng) weights = dropout(weights, config.dropout_rate, *dropout_rng);
    head_outputs.push_back(matmul(weights, vh));
  }
  Tensor merged = heads == 1 ? head_outputs[0] : concat_cols(head_outputs);
  return add_row_bias(matmul(merged, lp.wo), lp.bo);
}

Tensor feedforward_block(const Tensor& x, const LayerParams& lp, const ModelConfig& config,
                         Rng* dropout_rng) {
  Tensor hidden = gelu(add_row_bias(matmul(x, lp.w1), lp.b1));
  Tensor out = add_row_bias(matmul(hidden, lp.w2), lp.b2);
  if (dropout_rng) out = dropout(out, config.dropout_rate, *dropout_rng);
  return out;
}

}  // namespace

ForwardOutput forward(const Tensor& context_vectors, const Tensor& response_vectors,
                      const ModelParams& params, const ModelConfig& config,
                      Rng* dropout_rng) {
  if (config.dropout_rate == 0.0) dropout_rng = nullptr;
  const std::size_t m = context_vectors.rows();
  const std::size_t n = response_vectors.defined() ? response_vectors.rows() : 0;

  Tensor x = assemble_input(
      context_vectors,
      response_vectors.defined() ? response_vectors : Tensor::zeros({0, config.embed_dim}),
      params, config);

  for (const LayerParams& lp : params.layers) {
    x = add(x, attention_block(layer_norm_rows(x, lp.ln1_gain, lp.ln1_bias), lp, config,
                               dropout_rng));
    x = add(x, feedforward_block(layer_norm_rows(x, lp.ln2_gain, lp.ln2_bias), lp, config,
                                 dropout_rng));
  }

  ForwardOutput out;
  out.H = layer_norm_rows(x, params.final_norm_gain, params.final_norm_bias);
  Tensor pre_logit_rows = slice_rows(out.H, m - 1, m - 1 + n);
  out.logits = add_row_bias(matmul(pre_logit_rows, params.output_w), params.output_b);
  out.probs = softmax_rows(out.logits);
  return out;
}

Tensor nll_loss(const Tensor& probs, const std::vector<TokenId>& targets,
                const std::vector<std::uint8_t>& keep) {
  return nll_from_probs(probs, targets, keep);
}

Tensor next_token_distribution(const ForwardOutput& out, const ModelParams& params) {
  Tensor last = slice_rows(out.H, out.H.rows() - 1, out.H.rows());
  return softmax_rows(add_row_bias(matmul(last, params.output_w), params.output_b));
}

}  // namespace rad
