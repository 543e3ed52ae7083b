// Corpus ingestion and preparation: JSONL loading, word-level vocabulary,
// tokenization, id encoding with separator/terminator structure, padding into
// batches, and a deterministic synthetic copy task for experiments.
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "rad/rng.hpp"
#include "rad/tensor.hpp"

namespace rad {

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kSepId = 2;
inline constexpr TokenId kEosId = 3;
inline constexpr TokenId kUnkId = 4;
inline constexpr std::size_t kReservedTokens = 5;

class Vocabulary {
 public:
  Vocabulary();

  // Unknown tokens map to the unk id; reserved tokens keep their fixed slots.
  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const;
  bool contains(const std::string& token) const;
  std::size_t size() const { return id_to_token_.size(); }

  // Appends a non-reserved token; rejects duplicates.
  TokenId add(const std::string& token);

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

// Whitespace-separated words; ASCII punctuation splits off as single-character
// tokens; bytes outside ASCII are treated as word characters. No case folding.
std::vector<std::string> tokenize(const std::string& text);
std::string detokenize(const std::vector<std::string>& tokens);

struct RawPair {
  std::vector<std::string> context_turns;
  std::string response;
};

struct CorpusLoad {
  std::vector<RawPair> pairs;
  std::size_t skipped = 0;  // records with an empty context or response
};

// One JSON object per line: {"context": string or [string...], "response":
// string}. Malformed lines raise a parse error naming the line number.
CorpusLoad load_corpus(const std::string& path);
void save_corpus(const std::vector<RawPair>& pairs, const std::string& path);

// Frequency-ranked word vocabulary (ties keep first-occurrence order),
// truncated to max_size entries including the reserved ones.
Vocabulary build_vocab(const std::vector<RawPair>& pairs, std::size_t max_size);

struct DialoguePair {
  std::vector<TokenId> context;   // each turn followed by SEP; ends with SEP
  std::vector<TokenId> response;  // ends with EOS
};

struct EncodedCorpus {
  std::vector<DialoguePair> pairs;
  std::size_t truncated = 0;  // contexts cut from the left to fit
  std::size_t dropped = 0;    // pairs that cannot fit even with m=1
};

DialoguePair encode_pair(const RawPair& raw, const Vocabulary& vocab);
std::vector<TokenId> encode_response(const std::string& text, const Vocabulary& vocab);
EncodedCorpus encode_corpus(const std::vector<RawPair>& raw, const Vocabulary& vocab,
                            std::size_t max_positions);

struct Batch {
  std::size_t size = 0;     // pairs in this batch
  std::size_t ctx_width = 0;
  std::size_t rsp_width = 0;
  std::vector<TokenId> context_ids;       // size x ctx_width, PAD-filled
  std::vector<std::uint8_t> context_mask; // 1 = real token
  std::vector<TokenId> response_ids;      // size x rsp_width, PAD-filled
  std::vector<std::uint8_t> response_mask;
  std::vector<std::size_t> pair_indices;  // provenance into the corpus

  std::vector<TokenId> context_of(std::size_t i) const;
  std::vector<TokenId> response_of(std::size_t i) const;
};

// Shuffles pair order with the given generator, then cuts fixed-size batches
// (the last one may be short). Deterministic per (corpus, rng state).
std::vector<Batch> make_batches(const std::vector<DialoguePair>& pairs,
                                std::size_t batch_size, Rng& rng);

// Copy task: single-character words over a 20-symbol alphabet; the response
// repeats the context words in reverse order. Contexts are unique.
std::vector<RawPair> make_synthetic_corpus(std::size_t count, std::uint64_t seed);

}  // namespace rad
