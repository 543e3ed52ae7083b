// Training engine: Adam, the per-step blending schedule, batch loss assembly
// for the four model variants, and the epoch loop with reporting.
//
// Randomness is split into independent streams (init, batch order, sampling,
// dropout) so that turning one mechanism on or off never perturbs the others;
// the ablation grid relies on this to keep data order identical across
// variants. All stochastic choices of a step can be recorded and replayed,
// which turns the batch loss into a deterministic function of the parameters
// for finite-difference checking.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rad/data.hpp"
#include "rad/model.hpp"
#include "rad/response_aware.hpp"
#include "rad/rng.hpp"
#include "rad/sampling.hpp"

namespace rad {

struct TrainConfig {
  double learning_rate = 3e-4;
  std::size_t batch_size = 16;
  std::size_t epochs = 1;
  double gamma = 0.5;        // weight of the generation loss when use_ra is set
  double mu = 4.0;           // replacement schedule shape
  std::size_t top_k = 5;     // candidates averaged per replacement
  double lambda_floor = 0.2;
  bool use_ss = false;
  bool use_ra = false;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // epochs between checkpoint writes; 0 = final only
  std::string checkpoint_dir;        // empty = never write checkpoints

  void validate() const;
  // Weight actually applied to loss_M; without the response-aware path the
  // auxiliary loss is identically zero and the generation loss gets weight 1.
  double effective_gamma() const { return use_ra ? gamma : 1.0; }
};

struct LambdaSchedule {
  std::size_t steps_in_first_epoch = 1;
  double floor = 0.2;
  void validate() const;
};

// 1 at step 0, linear down to the floor across the first epoch, floor after.
double lambda_at(std::size_t step, const LambdaSchedule& sched);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  // Registers the tensors to update. May be called repeatedly to grow the set.
  void attach(const std::vector<Tensor>& params);
  // One update from the gradients currently accumulated on the attached
  // tensors. Missing gradients count as zero.
  void step();
  std::size_t steps_taken() const { return t_; }

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

// Fixed per-batch sampling decisions: which response positions of each row
// were replaced and by what. Replaying them removes all randomness from
// batch_loss.
struct BatchStochastics {
  double p = 0.0;
  std::vector<Tensor> replacements;
  std::vector<std::vector<std::uint8_t>> masks;
};

// Builds the differentiable mean loss over the batch rows. Padding never
// reaches the model; each row is processed at its true length. When use_ss is
// set, sampling decisions are drawn through sched unless replay is given;
// record, when non-null, receives the decisions used.
LossBreakdown batch_loss(const Batch& batch, const ModelParams& params,
                         const RaParams& ra_params, const ModelConfig& mcfg,
                         const RaConfig& rcfg, const TrainConfig& tcfg,
                         double lambda, const SampleSchedule* sched,
                         const BatchStochastics* replay = nullptr,
                         BatchStochastics* record = nullptr,
                         Rng* dropout_rng = nullptr);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss_M = 0.0;
  double loss_RA = 0.0;
  double loss_total = 0.0;
  double p = 0.0;           // replacement probability in force this epoch
  double lambda_end = 0.0;  // blend weight at the epoch's last step
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::uint64_t seed = 0;
  double gamma = 1.0;  // weight used in every loss_total row
  double wall_seconds = 0.0;

  // One line per epoch plus a summary line. Wall time is deliberately left
  // out so identical runs serialize to identical bytes.
  std::string to_jsonl() const;
};

struct StepLosses {
  double loss_M = 0.0;
  double loss_RA = 0.0;
  double loss_total = 0.0;
};

class Trainer {
 public:
  Trainer(ModelConfig mcfg, RaConfig rcfg, TrainConfig tcfg);

  // Full run over the corpus: shuffled fixed-size batches per epoch, one
  // optimizer step per batch, per-epoch loss means in the report.
  TrainReport fit(const std::vector<DialoguePair>& corpus);

  // One optimizer step on one batch. Throws NumericError with step and batch
  // diagnostics if the loss or any gradient leaves the finite range.
  StepLosses train_step(const Batch& batch, std::size_t epoch, std::size_t batch_index);

  ModelParams& model_params() { return params_; }
  RaParams& ra_parameters() { return ra_; }
  const ModelConfig& model_config() const { return mcfg_; }
  const RaConfig& ra_config() const { return rcfg_; }
  const TrainConfig& train_config() const { return tcfg_; }
  std::size_t global_step() const { return global_step_; }
  LambdaSchedule& lambda_schedule() { return lsched_; }

 private:
  ModelConfig mcfg_;
  RaConfig rcfg_;
  TrainConfig tcfg_;
  ModelParams params_;
  RaParams ra_;
  Adam adam_;
  Rng order_rng_;
  Rng sample_rng_;
  Rng dropout_rng_;
  LambdaSchedule lsched_;
  std::size_t global_step_ = 0;
};

}  // namespace rad
