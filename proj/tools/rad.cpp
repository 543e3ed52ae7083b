// rad: experiment driver. Subcommands cover the full loop: make a synthetic
// corpus, train, generate, evaluate, run the four-variant grid, or chat with
// a trained model. Progress goes to stderr, result tables to stdout, and
// machine-readable artifacts to files, which are always written atomically.
// Exit codes: 0 success, 2 usage or configuration problem, 3 numeric failure.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rad/ablation.hpp"
#include "rad/checkpoint.hpp"
#include "rad/config.hpp"
#include "rad/data.hpp"
#include "rad/decode.hpp"
#include "rad/errors.hpp"
#include "rad/metrics.hpp"
#include "rad/train.hpp"

namespace {

using namespace rad;
namespace fs = std::filesystem;

void write_text_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << content;
    if (!out) throw ParseError("cannot write '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw ParseError("cannot move '" + tmp.string() + "' into place: " + ec.message());
  }
}

ExperimentConfig assemble_config(const std::string& config_path,
                                 const std::vector<std::string>& sets,
                                 const std::optional<std::uint64_t>& seed) {
  ExperimentConfig cfg;
  if (!config_path.empty()) load_config_file(cfg, config_path);
  apply_overrides(cfg, sets);
  if (seed) cfg.train.seed = *seed;
  cfg.finalize();
  return cfg;
}

// Left-truncates so the generation budget fits inside the position range.
std::vector<TokenId> context_ids(const RawPair& raw, const Vocabulary& vocab,
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

// One JSON object per line with a "context" field (string or array of turn
// strings). Other fields are ignored. Blank contexts are skipped.
struct ContextFile {
  std::vector<RawPair> pairs;       // responses left empty
  std::vector<nlohmann::json> raw;  // original context field, echoed to output
  std::size_t skipped = 0;
};

ContextFile read_contexts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("read_contexts: cannot open '" + path + "'");
  ContextFile out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("read_contexts: line " + std::to_string(line_no) + ": " +
                       e.what());
    }
    if (!obj.is_object() || !obj.contains("context"))
      throw ParseError("read_contexts: line " + std::to_string(line_no) +
                       ": missing 'context'");
    const nlohmann::json& ctx = obj["context"];
    RawPair pair;
    if (ctx.is_string()) {
      pair.context_turns.push_back(ctx.get<std::string>());
    } else if (ctx.is_array()) {
      for (const nlohmann::json& turn : ctx) {
        if (!turn.is_string())
          throw ParseError("read_contexts: line " + std::to_string(line_no) +
                           ": context turns must be strings");
        pair.context_turns.push_back(turn.get<std::string>());
      }
    } else {
      throw ParseError("read_contexts: line " + std::to_string(line_no) +
                       ": 'context' must be a string or an array");
    }
    bool blank = true;
    for (const std::string& turn : pair.context_turns)
      if (turn.find_first_not_of(" \t\r") != std::string::npos) blank = false;
    if (pair.context_turns.empty() || blank) {
      ++out.skipped;
      continue;
    }
    out.pairs.push_back(std::move(pair));
    out.raw.push_back(ctx);
  }
  return out;
}

// Reads response strings from JSONL: "generated" when present, else
// "response".
std::vector<std::string> read_responses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("read_responses: cannot open '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("read_responses: line " + std::to_string(line_no) + ": " +
                       e.what());
    }
    const char* field = obj.contains("generated") ? "generated" : "response";
    if (!obj.is_object() || !obj.contains(field) || !obj[field].is_string())
      throw ParseError("read_responses: line " + std::to_string(line_no) +
                       ": expected a 'generated' or 'response' string");
    out.push_back(obj[field].get<std::string>());
  }
  return out;
}

struct CorpusArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string corpus;
  std::string out_dir;
};

int cmd_train(const CorpusArgs& args) {
  ExperimentConfig cfg = assemble_config(args.config_path, args.sets, args.seed);

  const CorpusLoad loaded = load_corpus(args.corpus);
  if (loaded.pairs.empty())
    throw ContractError("train: '" + args.corpus + "' has no usable pairs");
  std::cerr << "corpus: " << loaded.pairs.size() << " pairs (" << loaded.skipped
            << " skipped)\n";

  const Vocabulary vocab = build_vocab(loaded.pairs, cfg.vocab_limit);
  cfg.model.vocab_size = vocab.size();
  const EncodedCorpus encoded =
      encode_corpus(loaded.pairs, vocab, cfg.model.max_positions);
  if (encoded.pairs.empty())
    throw ContractError("train: no pair fits max_positions=" +
                        std::to_string(cfg.model.max_positions));
  std::cerr << "encoded: " << encoded.pairs.size() << " pairs, "
            << encoded.truncated << " truncated, " << encoded.dropped
            << " dropped\n";

  fs::create_directories(args.out_dir);
  const fs::path out_dir(args.out_dir);
  {
    const fs::path tmp = out_dir / "vocab.txt.tmp";
    vocab.save(tmp.string());
    fs::rename(tmp, out_dir / "vocab.txt");
  }

  cfg.train.checkpoint_dir = args.out_dir;
  Trainer trainer(cfg.model, cfg.ra, cfg.train);
  const TrainReport report = trainer.fit(encoded.pairs);
  write_text_atomic(out_dir / "report.jsonl", report.to_jsonl());

  const EpochRecord& last = report.epochs.back();
  std::cerr << "trained " << report.epochs.size() << " epochs, final loss_total "
            << last.loss_total << " (loss_M " << last.loss_M << ")\n";
  std::cerr << "wrote " << (out_dir / "report.jsonl").string() << ", "
            << (out_dir / "model.ckpt").string() << ", "
            << (out_dir / "vocab.txt").string() << "\n";
  return 0;
}

struct AblateArgs : CorpusArgs {
  std::string eval_corpus;
  bool parallel = false;
};

int cmd_ablate(const AblateArgs& args) {
  ExperimentConfig cfg = assemble_config(args.config_path, args.sets, args.seed);

  const CorpusLoad train_load = load_corpus(args.corpus);
  const CorpusLoad eval_load = load_corpus(args.eval_corpus);
  if (train_load.pairs.empty() || eval_load.pairs.empty())
    throw ContractError("ablate: a corpus has no usable pairs");
  std::cerr << "train corpus: " << train_load.pairs.size() << " pairs, held-out: "
            << eval_load.pairs.size() << " pairs\n";

  const Vocabulary vocab = build_vocab(train_load.pairs, cfg.vocab_limit);
  cfg.model.vocab_size = vocab.size();

  AblationConfig acfg;
  acfg.generation = cfg.generation;
  acfg.parallel = args.parallel;
  const AblationReport report = run_ablation(
      train_load.pairs, eval_load.pairs, vocab, cfg.model, cfg.ra, cfg.train, acfg);

  std::cout << report.to_text();
  fs::create_directories(args.out_dir);
  const fs::path out_dir(args.out_dir);
  write_text_atomic(out_dir / "ablation.json", report.to_json() + "\n");
  write_text_atomic(out_dir / "ablation.txt", report.to_text());
  std::cerr << "wrote " << (out_dir / "ablation.json").string() << "\n";
  return 0;
}

struct GenerateArgs {
  std::string checkpoint;
  std::string vocab_path;
  std::string contexts;
  std::string out_path;
  std::size_t max_new_tokens = 32;
};

int cmd_generate(const GenerateArgs& args) {
  const LoadedCheckpoint ck = load_checkpoint(args.checkpoint);
  const Vocabulary vocab = Vocabulary::load(args.vocab_path);
  if (vocab.size() != ck.model_config.vocab_size)
    throw ContractError("generate: vocabulary has " + std::to_string(vocab.size()) +
                        " entries but the checkpoint expects " +
                        std::to_string(ck.model_config.vocab_size));
  GenerationConfig gcfg;
  gcfg.max_new_tokens = args.max_new_tokens;
  gcfg.validate();

  const ContextFile contexts = read_contexts(args.contexts);
  if (contexts.pairs.empty())
    throw ContractError("generate: '" + args.contexts + "' has no usable contexts");
  if (contexts.skipped)
    std::cerr << "skipped " << contexts.skipped << " blank contexts\n";

  const RaParams* ra = ck.has_ra ? &ck.ra_params : nullptr;
  const RaConfig* rc = ck.has_ra ? &ck.ra_config : nullptr;
  std::string lines;
  for (std::size_t i = 0; i < contexts.pairs.size(); ++i) {
    const std::vector<TokenId> ctx =
        context_ids(contexts.pairs[i], vocab, ck.model_config, gcfg);
    const std::vector<TokenId> tokens =
        generate(ctx, ck.params, ck.model_config, ra, rc, gcfg);
    const std::string text = detokenize(words_from_ids(tokens, vocab));
    lines += nlohmann::json{{"context", contexts.raw[i]}, {"generated", text}}
                 .dump() +
             "\n";
  }
  write_text_atomic(args.out_path, lines);
  std::cerr << "generated " << contexts.pairs.size() << " responses -> "
            << args.out_path << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string generated;
  std::string references;
  std::string out_path;
};

int cmd_evaluate(const EvaluateArgs& args) {
  const std::vector<std::string> gen = read_responses(args.generated);
  const std::vector<std::string> ref = read_responses(args.references);
  if (gen.size() != ref.size())
    throw ContractError("evaluate: " + std::to_string(gen.size()) +
                        " generated vs " + std::to_string(ref.size()) +
                        " references");
  std::vector<std::vector<std::string>> cands, refs;
  for (const std::string& s : gen) cands.push_back(tokenize(s));
  for (const std::string& s : ref) refs.push_back(tokenize(s));
  const MetricsReport report = evaluate_corpus(cands, refs);
  std::cout << report.to_text();
  if (!args.out_path.empty())
    write_text_atomic(args.out_path, report.to_json() + "\n");
  return 0;
}

struct ChatArgs {
  std::string checkpoint;
  std::string vocab_path;
  std::size_t max_new_tokens = 32;
};

int cmd_chat(const ChatArgs& args) {
  const LoadedCheckpoint ck = load_checkpoint(args.checkpoint);
  const Vocabulary vocab = Vocabulary::load(args.vocab_path);
  if (vocab.size() != ck.model_config.vocab_size)
    throw ContractError("chat: vocabulary does not match the checkpoint");
  GenerationConfig gcfg;
  gcfg.max_new_tokens = args.max_new_tokens;
  gcfg.validate();
  const RaParams* ra = ck.has_ra ? &ck.ra_params : nullptr;
  const RaConfig* rc = ck.has_ra ? &ck.ra_config : nullptr;

  std::cerr << "context> " << std::flush;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      const RawPair pair{{line}, ""};
      const std::vector<TokenId> ctx = context_ids(pair, vocab, ck.model_config, gcfg);
      const std::vector<TokenId> tokens =
          generate(ctx, ck.params, ck.model_config, ra, rc, gcfg);
      std::cout << detokenize(words_from_ids(tokens, vocab)) << "\n" << std::flush;
    }
    std::cerr << "context> " << std::flush;
  }
  std::cerr << "\n";
  return 0;
}

struct SyntheticArgs {
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::string out_path;
};

int cmd_make_synthetic(const SyntheticArgs& args) {
  const std::vector<RawPair> pairs = make_synthetic_corpus(args.count, args.seed);
  const fs::path out(args.out_path);
  fs::path tmp = out;
  tmp += ".tmp";
  save_corpus(pairs, tmp.string());
  std::error_code ec;
  fs::rename(tmp, out, ec);
  if (ec) {
    fs::remove(tmp);
    throw ParseError("cannot move '" + tmp.string() + "' into place: " + ec.message());
  }
  std::cerr << "wrote " << pairs.size() << " pairs -> " << args.out_path << "\n";
  return 0;
}

void add_config_options(CLI::App* sub, CorpusArgs& args) {
  sub->add_option("--config", args.config_path, "config file, key = value lines")
      ->check(CLI::ExistingFile);
  sub->add_option("--set", args.sets, "override, dotted key=value (repeatable)");
  sub->add_option("--seed", args.seed, "training seed, overrides train.seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"response-aware dialogue lab"};
  app.require_subcommand(1);
  int rc = 0;

  CorpusArgs train_args;
  CLI::App* train = app.add_subcommand("train", "fit a model on a JSONL corpus");
  add_config_options(train, train_args);
  train->add_option("--corpus", train_args.corpus, "training corpus (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--out", train_args.out_dir,
                    "output directory for vocab, checkpoints, report")
      ->required();
  train->callback([&] { rc = cmd_train(train_args); });

  AblateArgs ablate_args;
  CLI::App* ablate =
      app.add_subcommand("ablate", "train the four-variant grid and score it");
  add_config_options(ablate, ablate_args);
  ablate->add_option("--corpus", ablate_args.corpus, "training corpus (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  ablate
      ->add_option("--eval-corpus", ablate_args.eval_corpus,
                   "held-out corpus (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  ablate->add_option("--out", ablate_args.out_dir, "output directory")->required();
  ablate->add_flag("--parallel", ablate_args.parallel,
                   "train the four variants on separate threads");
  ablate->callback([&] { rc = cmd_ablate(ablate_args); });

  GenerateArgs gen_args;
  CLI::App* gen =
      app.add_subcommand("generate", "greedy responses for a context file");
  gen->add_option("--checkpoint", gen_args.checkpoint, "trained model")
      ->required()
      ->check(CLI::ExistingFile);
  gen->add_option("--vocab", gen_args.vocab_path, "vocabulary file")
      ->required()
      ->check(CLI::ExistingFile);
  gen->add_option("--contexts", gen_args.contexts,
                  "JSONL with a 'context' field per line")
      ->required()
      ->check(CLI::ExistingFile);
  gen->add_option("--out", gen_args.out_path, "output JSONL")->required();
  gen->add_option("--max-new-tokens", gen_args.max_new_tokens,
                  "generation length cap");
  gen->add_option("--seed", "accepted for interface uniformity; greedy decoding "
                            "is deterministic");
  gen->callback([&] { rc = cmd_generate(gen_args); });

  EvaluateArgs eval_args;
  CLI::App* eval =
      app.add_subcommand("evaluate", "score generated responses against references");
  eval->add_option("--generated", eval_args.generated,
                   "JSONL with 'generated' or 'response' per line")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--references", eval_args.references, "reference JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--out", eval_args.out_path, "also write the report as JSON");
  eval->callback([&] { rc = cmd_evaluate(eval_args); });

  ChatArgs chat_args;
  CLI::App* chat =
      app.add_subcommand("chat", "interactive loop: one context line in, one response out");
  chat->add_option("--checkpoint", chat_args.checkpoint, "trained model")
      ->required()
      ->check(CLI::ExistingFile);
  chat->add_option("--vocab", chat_args.vocab_path, "vocabulary file")
      ->required()
      ->check(CLI::ExistingFile);
  chat->add_option("--max-new-tokens", chat_args.max_new_tokens,
                   "generation length cap");
  chat->add_option("--seed", "accepted for interface uniformity; greedy decoding "
                             "is deterministic");
  chat->callback([&] { rc = cmd_chat(chat_args); });

  SyntheticArgs syn_args;
  CLI::App* syn =
      app.add_subcommand("make-synthetic", "write a seeded copy-task corpus");
  syn->add_option("--count", syn_args.count, "number of pairs")
      ->required()
      ->check(CLI::PositiveNumber);
  syn->add_option("--seed", syn_args.seed, "corpus seed");
  syn->add_option("--out", syn_args.out_path, "output JSONL")->required();
  syn->callback([&] { rc = cmd_make_synthetic(syn_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const rad::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}
