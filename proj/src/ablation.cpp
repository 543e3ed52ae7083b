#include "rad/ablation.hpp"

#include <cstdio>
#include <exception>
#include <thread>
#include <utility>

#include <json.hpp>

#include "rad/errors.hpp"

namespace rad {

namespace {

struct VariantSpec {
  const char* name;
  bool use_ss;
  bool use_ra;
};

constexpr VariantSpec kGrid[4] = {
    {"base", false, false},
    {"+SS", true, false},
    {"+RA", false, true},
    {"+SS+RA", true, true},
};

// Context ids for generation, left-truncated so the response budget fits
// inside the model's position range.
std::vector<TokenId> eval_context(const RawPair& raw, const Vocabulary& vocab,
                                  const ModelConfig& mcfg,
                                  const GenerationConfig& gcfg) {
  std::vector<TokenId> ctx = encode_pair(raw, vocab).context;
  const std::size_t room = gcfg.max_new_tokens < mcfg.max_positions
                               ? mcfg.max_positions - gcfg.max_new_tokens
                               : 1;
  if (ctx.size() > room)
    ctx.erase(ctx.begin(), ctx.end() - static_cast<std::ptrdiff_t>(room));
  return ctx;
}

AblationRow run_variant(const VariantSpec& spec,
                        const std::vector<DialoguePair>& encoded_train,
                        const std::vector<RawPair>& eval_pairs,
                        const Vocabulary& vocab, const ModelConfig& mcfg,
                        const RaConfig& rcfg, TrainConfig tcfg,
                        const AblationConfig& acfg) {
  tcfg.use_ss = spec.use_ss;
  tcfg.use_ra = spec.use_ra;
  tcfg.checkpoint_dir.clear();
  tcfg.checkpoint_every = 0;

  AblationRow row;
  row.name = spec.name;
  row.use_ss = spec.use_ss;
  row.use_ra = spec.use_ra;

  Trainer trainer(mcfg, rcfg, tcfg);
  row.train = trainer.fit(encoded_train);

  const RaParams* ra = spec.use_ra ? &trainer.ra_parameters() : nullptr;
  const RaConfig* rc = spec.use_ra ? &trainer.ra_config() : nullptr;
  std::vector<std::vector<std::string>> candidates;
  std::vector<std::vector<std::string>> references;
  for (const RawPair& pair : eval_pairs) {
    const std::vector<TokenId> ctx = eval_context(pair, vocab, mcfg, acfg.generation);
    const std::vector<TokenId> out =
        generate(ctx, trainer.model_params(), mcfg, ra, rc, acfg.generation);
    candidates.push_back(words_from_ids(out, vocab));
    references.push_back(tokenize(pair.response));
  }
  row.eval = evaluate_corpus(candidates, references);
  return row;
}

}  // namespace

std::string AblationReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const AblationRow& row : rows) {
    nlohmann::json metrics = {{"f1", row.eval.f1},
                              {"bleu1", row.eval.bleu1},
                              {"bleu2", row.eval.bleu2},
                              {"distinct1", row.eval.distinct1},
                              {"distinct2", row.eval.distinct2}};
    rows_json.push_back(
        {{"variant", row.name},
         {"use_ss", row.use_ss},
         {"use_ra", row.use_ra},
         {"epochs", row.train.epochs.size()},
         {"final_loss_total",
          row.train.epochs.empty() ? 0.0 : row.train.epochs.back().loss_total},
         {"metrics", metrics}});
  }
  return nlohmann::json{{"seed", seed}, {"rows", rows_json}}.dump();
}

std::string AblationReport::to_text() const {
  std::string out =
      "variant     F1      BLEU-1  BLEU-2  DISTINCT-1  DISTINCT-2   (x100)\n";
  char line[160];
  for (const AblationRow& row : rows) {
    std::snprintf(line, sizeof line, "%-10s  %6.2f  %6.2f  %6.2f  %10.2f  %10.2f\n",
                  row.name.c_str(), 100.0 * row.eval.f1, 100.0 * row.eval.bleu1,
                  100.0 * row.eval.bleu2, 100.0 * row.eval.distinct1,
                  100.0 * row.eval.distinct2);
    out += line;
  }
  return out;
}

AblationReport run_ablation(const std::vector<RawPair>& train_pairs,
                            const std::vector<RawPair>& eval_pairs,
                            const Vocabulary& vocab, const ModelConfig& mcfg,
                            const RaConfig& rcfg, const TrainConfig& base_config,
                            const AblationConfig& acfg) {
  if (train_pairs.empty())
    throw ContractError("run_ablation: empty training corpus");
  if (eval_pairs.empty())
    throw ContractError("run_ablation: empty evaluation corpus");
  acfg.generation.validate();

  const EncodedCorpus encoded = encode_corpus(train_pairs, vocab, mcfg.max_positions);
  if (encoded.pairs.empty())
    throw ContractError("run_ablation: no training pair fits the position budget");

  AblationReport report;
  report.seed = base_config.seed;
  report.rows.resize(4);

  auto build_row = [&](std::size_t i) {
    return run_variant(kGrid[i], encoded.pairs, eval_pairs, vocab, mcfg, rcfg,
                       base_config, acfg);
  };

  if (acfg.parallel) {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(report.rows.size());
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
      workers.emplace_back([&, i] {
        try {
          report.rows[i] = build_row(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (std::thread& w : workers) w.join();
    for (const std::exception_ptr& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t i = 0; i < report.rows.size(); ++i)
      report.rows[i] = build_row(i);
  }
  return report;
}

}  // namespace rad
