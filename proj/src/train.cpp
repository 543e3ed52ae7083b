#include "rad/train.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "rad/checkpoint.hpp"
#include "rad/errors.hpp"

namespace rad {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ContractError("TrainConfig: learning_rate must be positive and finite");
  if (batch_size == 0) throw ContractError("TrainConfig: batch_size must be positive");
  if (epochs == 0) throw ContractError("TrainConfig: at least one epoch");
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw ContractError("TrainConfig: gamma must lie in [0, 1]");
  if (!(mu > 0.0)) throw ContractError("TrainConfig: mu must be positive");
  if (top_k == 0) throw ContractError("TrainConfig: top_k must be positive");
  if (!(lambda_floor >= 0.0 && lambda_floor <= 1.0))
    throw ContractError("TrainConfig: lambda_floor must lie in [0, 1]");
}

void LambdaSchedule::validate() const {
  if (steps_in_first_epoch == 0)
    throw ContractError("LambdaSchedule: steps_in_first_epoch must be positive");
  if (!(floor >= 0.0 && floor <= 1.0))
    throw ContractError("LambdaSchedule: floor must lie in [0, 1]");
}

double lambda_at(std::size_t step, const LambdaSchedule& sched) {
  sched.validate();
  if (step >= sched.steps_in_first_epoch) return sched.floor;
  const double frac =
      static_cast<double>(step) / static_cast<double>(sched.steps_in_first_epoch);
  return 1.0 - (1.0 - sched.floor) * frac;
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr > 0.0)) throw ContractError("Adam: learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ContractError("Adam: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ContractError("Adam: eps must be positive");
}

void Adam::attach(const std::vector<Tensor>& params) {
  for (const Tensor& t : params) {
    Slot slot;
    slot.param = t;
    slot.m.assign(t.numel(), 0.0);
    slot.v.assign(t.numel(), 0.0);
    slots_.push_back(std::move(slot));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    Slot& slot = slots_[s];
    std::vector<double>& w = slot.param.mutable_values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = slot.param.grad_at(i);
      if (!std::isfinite(g))
        throw NumericError("adam: non-finite gradient in tensor " + std::to_string(s) +
                           " at element " + std::to_string(i));
      slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * g;
      slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * g * g;
      const double m_hat = slot.m[i] / c1;
      const double v_hat = slot.v[i] / c2;
      w[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

LossBreakdown batch_loss(const Batch& batch, const ModelParams& params,
                         const RaParams& ra_params, const ModelConfig& mcfg,
                         const RaConfig& rcfg, const TrainConfig& tcfg,
                         double lambda, const SampleSchedule* sched,
                         const BatchStochastics* replay, BatchStochastics* record,
                         Rng* dropout_rng) {
  if (batch.size == 0) throw ContractError("batch_loss: empty batch");
  if (tcfg.use_ss && replay == nullptr && sched == nullptr)
    throw ContractError("batch_loss: sampling needs a schedule or replayed decisions");
  if (replay && replay->replacements.size() != batch.size)
    throw ContractError("batch_loss: replay covers " +
                        std::to_string(replay->replacements.size()) + " rows, batch has " +
                        std::to_string(batch.size));
  if (record) {
    record->replacements.clear();
    record->masks.clear();
    record->p = replay ? replay->p : (sched ? replace_probability(*sched) : 0.0);
  }

  Tensor sum_m;
  Tensor sum_ra;
  for (std::size_t i = 0; i < batch.size; ++i) {
    const std::vector<TokenId> ctx = batch.context_of(i);
    const std::vector<TokenId> rsp = batch.response_of(i);
    if (ctx.empty() || rsp.empty())
      throw ContractError("batch_loss: row " + std::to_string(i) + " is empty");

    Tensor ex = embed(ctx, params);
    Tensor ey = embed(rsp, params);
    Tensor er = ey;
    if (tcfg.use_ss) {
      if (replay) {
        er = compose_rows(ey, replay->replacements[i], replay->masks[i]);
        if (record) {
          record->replacements.push_back(replay->replacements[i]);
          record->masks.push_back(replay->masks[i]);
        }
      } else {
        ReconstructedResponse rec = reconstruct(ex, ey, params, mcfg, *sched);
        er = rec.E_r;
        if (record) {
          record->replacements.push_back(rec.replacements);
          record->masks.push_back(rec.replaced_mask);
        }
      }
    }

    const std::vector<std::uint8_t> keep(rsp.size(), 1);
    Tensor pair_m;
    Tensor pair_ra;
    if (tcfg.use_ra) {
      Tensor e_ra = response_aware(er, ex, ra_params, rcfg);
      Tensor e_pred = predict_response_aware(ex, ra_params);
      Tensor e_m = merge(e_ra, e_pred, lambda);
      ForwardOutput out = forward(e_m, er, params, mcfg, dropout_rng);
      pair_m = nll_loss(out.probs, rsp, keep);
      pair_ra = ra_loss(e_pred, e_ra);
    } else {
      ForwardOutput out = forward(ex, er, params, mcfg, dropout_rng);
      pair_m = nll_loss(out.probs, rsp, keep);
    }
    sum_m = i == 0 ? pair_m : add(sum_m, pair_m);
    if (tcfg.use_ra) sum_ra = i == 0 ? pair_ra : add(sum_ra, pair_ra);
  }

  const double inv = 1.0 / static_cast<double>(batch.size);
  LossBreakdown out;
  out.loss_M = scale(sum_m, inv);
  out.loss_RA = tcfg.use_ra ? scale(sum_ra, inv) : Tensor::zeros({1});
  out.gamma = tcfg.effective_gamma();
  out.loss_total = total_loss(out.loss_M, out.loss_RA, out.gamma);
  return out;
}

std::string TrainReport::to_jsonl() const {
  std::string out;
  for (const EpochRecord& e : epochs) {
    nlohmann::json j = {{"epoch", e.epoch},           {"loss_M", e.loss_M},
                        {"loss_RA", e.loss_RA},       {"loss_total", e.loss_total},
                        {"p", e.p},                   {"lambda", e.lambda_end}};
    out += j.dump();
    out.push_back('\n');
  }
  nlohmann::json s = {{"summary", true},
                      {"seed", seed},
                      {"gamma", gamma},
                      {"epochs", epochs.size()},
                      {"final_loss_total", epochs.empty() ? 0.0 : epochs.back().loss_total}};
  out += s.dump();
  out.push_back('\n');
  return out;
}

Trainer::Trainer(ModelConfig mcfg, RaConfig rcfg, TrainConfig tcfg)
    : mcfg_(mcfg),
      rcfg_(rcfg),
      tcfg_(tcfg),
      adam_(tcfg.learning_rate > 0.0 ? tcfg.learning_rate : 1.0),
      order_rng_(0),
      sample_rng_(0),
      dropout_rng_(0) {
  mcfg_.validate();
  rcfg_.validate();
  tcfg_.validate();
  if (rcfg_.embed_dim != mcfg_.embed_dim)
    throw ContractError("Trainer: embedding widths disagree (" +
                        std::to_string(mcfg_.embed_dim) + " vs " +
                        std::to_string(rcfg_.embed_dim) + ")");

  const Rng master(tcfg_.seed);
  Rng init_rng = master.split(1);
  params_ = ModelParams::init(mcfg_, init_rng);
  Rng ra_init_rng = master.split(2);
  ra_ = RaParams::init(rcfg_, ra_init_rng);
  order_rng_ = master.split(3);
  sample_rng_ = master.split(4);
  dropout_rng_ = master.split(5);
  lsched_.floor = tcfg_.lambda_floor;

  std::vector<Tensor> trainable;
  params_.for_each([&](const std::string&, Tensor& t) { trainable.push_back(t); });
  if (tcfg_.use_ra)
    ra_.for_each([&](const std::string&, Tensor& t) { trainable.push_back(t); });
  adam_.attach(trainable);
}

StepLosses Trainer::train_step(const Batch& batch, std::size_t epoch,
                               std::size_t batch_index) {
  const double lambda = lambda_at(global_step_, lsched_);
  SampleSchedule sched =
      SampleSchedule::from_rng(tcfg_.top_k, tcfg_.mu, epoch, sample_rng_);

  params_.zero_grads();
  ra_.zero_grads();
  LossBreakdown breakdown =
      batch_loss(batch, params_, ra_, mcfg_, rcfg_, tcfg_, lambda, &sched, nullptr,
                 nullptr, mcfg_.dropout_rate > 0.0 ? &dropout_rng_ : nullptr);
  const StepLosses losses{breakdown.loss_M.values()[0], breakdown.loss_RA.values()[0],
                          breakdown.loss_total.values()[0]};
  breakdown.loss_total.backward();

  double max_abs_grad = 0.0;
  bool finite = std::isfinite(losses.loss_total);
  auto scan = [&](const std::string&, const Tensor& t) {
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double g = t.grad_at(i);
      if (!std::isfinite(g))
        finite = false;
      else if (std::abs(g) > max_abs_grad)
        max_abs_grad = std::abs(g);
    }
  };
  static_cast<const ModelParams&>(params_).for_each(scan);
  if (tcfg_.use_ra) static_cast<const RaParams&>(ra_).for_each(scan);
  if (!finite)
    throw NumericError("train_step: non-finite loss or gradient at step " +
                       std::to_string(global_step_) + " (batch " +
                       std::to_string(batch_index) + "); loss=" +
                       std::to_string(losses.loss_total) + ", max finite |grad|=" +
                       std::to_string(max_abs_grad));

  adam_.step();
  ++global_step_;
  return losses;
}

TrainReport Trainer::fit(const std::vector<DialoguePair>& corpus) {
  if (corpus.empty()) throw ContractError("fit: corpus is empty");
  const auto t0 = std::chrono::steady_clock::now();

  TrainReport report;
  report.seed = tcfg_.seed;
  report.gamma = tcfg_.effective_gamma();
  lsched_.steps_in_first_epoch =
      (corpus.size() + tcfg_.batch_size - 1) / tcfg_.batch_size;
  lsched_.floor = tcfg_.lambda_floor;

  const bool checkpoints = !tcfg_.checkpoint_dir.empty();
  if (checkpoints) std::filesystem::create_directories(tcfg_.checkpoint_dir);

  for (std::size_t epoch = 0; epoch < tcfg_.epochs; ++epoch) {
    std::vector<Batch> batches = make_batches(corpus, tcfg_.batch_size, order_rng_);
    EpochRecord rec;
    rec.epoch = epoch;
    SampleSchedule probe;
    probe.mu = tcfg_.mu;
    probe.epoch = epoch;
    rec.p = replace_probability(probe);

    double sum_m = 0.0;
    double sum_ra = 0.0;
    double weight = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      rec.lambda_end = lambda_at(global_step_, lsched_);
      const StepLosses losses = train_step(batches[bi], epoch, bi);
      const double w = static_cast<double>(batches[bi].size);
      sum_m += w * losses.loss_M;
      sum_ra += w * losses.loss_RA;
      weight += w;
    }
    rec.loss_M = sum_m / weight;
    rec.loss_RA = sum_ra / weight;
    rec.loss_total = report.gamma * rec.loss_M + (1.0 - report.gamma) * rec.loss_RA;
    report.epochs.push_back(rec);

    if (checkpoints && tcfg_.checkpoint_every > 0 &&
        (epoch + 1) % tcfg_.checkpoint_every == 0 && epoch + 1 < tcfg_.epochs) {
      const std::string path =
          tcfg_.checkpoint_dir + "/ckpt_epoch_" + std::to_string(epoch) + ".bin";
      save_checkpoint(path, params_, mcfg_, tcfg_.use_ra ? &ra_ : nullptr,
                      tcfg_.use_ra ? &rcfg_ : nullptr);
    }
  }

  if (checkpoints)
    save_checkpoint(tcfg_.checkpoint_dir + "/model.ckpt", params_, mcfg_,
                    tcfg_.use_ra ? &ra_ : nullptr, tcfg_.use_ra ? &rcfg_ : nullptr);

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace rad
