#include "rad/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rad/errors.hpp"

namespace rad {

void SampleSchedule::validate() const {
  if (top_k < 1) throw ContractError("SampleSchedule: top_k must be at least 1");
  if (!(mu > 0.0)) throw ContractError("SampleSchedule: mu must be positive");
  if (!uniform01) throw ContractError("SampleSchedule: no uniform draw source");
}

SampleSchedule SampleSchedule::from_rng(std::size_t top_k, double mu, std::size_t epoch,
                                        Rng& rng) {
  SampleSchedule s;
  s.top_k = top_k;
  s.mu = mu;
  s.epoch = epoch;
  s.uniform01 = [&rng] { return rng.uniform(); };
  return s;
}

double replace_probability(const SampleSchedule& sched) {
  if (!(sched.mu > 0.0)) throw ContractError("replace_probability: mu must be positive");
  const double l = static_cast<double>(sched.epoch);
  return 1.0 / (1.0 + sched.mu / std::exp(l / sched.mu));
}

Tensor candidate_embedding(const Tensor& probs_row, const Tensor& table, std::size_t k) {
  const std::size_t v = table.rows(), l = table.cols();
  if (probs_row.numel() != v)
    throw DimensionError("candidate_embedding: distribution over " +
                         std::to_string(probs_row.numel()) + " ids vs table of " +
                         std::to_string(v) + " rows");
  if (k < 1 || k > v)
    throw ContractError("candidate_embedding: k " + std::to_string(k) +
                        " outside [1, " + std::to_string(v) + "]");

  const std::vector<double>& p = probs_row.values();
  std::vector<std::size_t> ids(v);
  std::iota(ids.begin(), ids.end(), 0);
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                    [&p](std::size_t a, std::size_t b) {
                      if (p[a] != p[b]) return p[a] > p[b];
                      return a < b;
                    });

  std::vector<double> out(l, 0.0);
  const std::vector<double>& rows = table.values();
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < l; ++j) out[j] += rows[ids[i] * l + j];
  const double inv_k = 1.0 / static_cast<double>(k);
  for (double& x : out) x *= inv_k;
  return Tensor::from_data({l}, std::move(out));
}

ReconstructedResponse reconstruct(const Tensor& context_emb, const Tensor& response_emb,
                                  const ModelParams& params, const ModelConfig& config,
                                  const SampleSchedule& sched) {
  sched.validate();
  const std::size_t n = response_emb.rows();
  const std::size_t l = response_emb.cols();

  Tensor probs;
  {
    NoGradGuard ng;  // teacher-forced pass supplies data, not gradients
    probs = forward(context_emb.detach(), response_emb.detach(), params, config).probs;
  }

  const double p = replace_probability(sched);
  ReconstructedResponse out;
  out.replaced_mask.assign(n, 0);
  std::vector<double> repl(n * l, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const double u = sched.uniform01();
    if (u < p) {
      out.replaced_mask[t] = 1;
      Tensor cand = candidate_embedding(slice_rows(probs, t, t + 1),
                                        params.token_embeddings, sched.top_k);
      std::copy(cand.values().begin(), cand.values().end(), repl.begin() + t * l);
    }
  }
  out.replacements = Tensor::from_data({n, l}, std::move(repl));
  out.E_r = compose_rows(response_emb, out.replacements, out.replaced_mask);
  return out;
}

}  // namespace rad
