#include "rad/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rad/errors.hpp"

namespace rad {

namespace {

const std::vector<std::string> kReservedNames = {"<pad>", "<bos>", "<sep>", "<eos>",
                                                 "<unk>"};

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const std::string& name : kReservedNames) {
    token_to_id_.emplace(name, static_cast<TokenId>(id_to_token_.size()));
    id_to_token_.push_back(name);
  }
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
    throw VocabularyError("token: id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(id_to_token_.size()));
  return id_to_token_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) != 0;
}

TokenId Vocabulary::add(const std::string& token) {
  if (token.empty()) throw VocabularyError("add: empty token");
  if (token_to_id_.count(token) != 0)
    throw VocabularyError("add: duplicate token '" + token + "'");
  const TokenId id = static_cast<TokenId>(id_to_token_.size());
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(token);
  return id;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("save: cannot open '" + path + "' for writing");
  for (const std::string& t : id_to_token_) out << t << '\n';
  if (!out) throw ParseError("save: write failure on '" + path + "'");
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("load: cannot open '" + path + "'");
  Vocabulary v;
  std::string line;
  std::size_t idx = 0;
  while (std::getline(in, line)) {
    if (idx < kReservedTokens) {
      if (line != kReservedNames[idx])
        throw ParseError("load: line " + std::to_string(idx + 1) + " must be reserved token '" +
                         kReservedNames[idx] + "', got '" + line + "'");
    } else {
      if (line.empty())
        throw ParseError("load: empty token at line " + std::to_string(idx + 1));
      v.add(line);
    }
    ++idx;
  }
  if (idx < kReservedTokens)
    throw ParseError("load: vocabulary file '" + path + "' is missing reserved tokens");
  return v;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  for (unsigned char c : text) {
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      word.push_back(static_cast<char>(c));
    }
  }
  flush();
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

CorpusLoad load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("load_corpus: cannot open '" + path + "'");
  CorpusLoad result;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("load_corpus: line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!rec.is_object())
      throw ParseError("load_corpus: line " + std::to_string(lineno) + ": not an object");
    if (!rec.contains("context"))
      throw ParseError("load_corpus: line " + std::to_string(lineno) +
                       ": missing \"context\"");
    if (!rec.contains("response"))
      throw ParseError("load_corpus: line " + std::to_string(lineno) +
                       ": missing \"response\"");

    RawPair pair;
    const auto& ctx = rec["context"];
    if (ctx.is_string()) {
      pair.context_turns.push_back(ctx.get<std::string>());
    } else if (ctx.is_array()) {
      for (const auto& turn : ctx) {
        if (!turn.is_string())
          throw ParseError("load_corpus: line " + std::to_string(lineno) +
                           ": context turns must be strings");
        pair.context_turns.push_back(turn.get<std::string>());
      }
    } else {
      throw ParseError("load_corpus: line " + std::to_string(lineno) +
                       ": \"context\" must be a string or list of strings");
    }
    if (!rec["response"].is_string())
      throw ParseError("load_corpus: line " + std::to_string(lineno) +
                       ": \"response\" must be a string");
    pair.response = rec["response"].get<std::string>();

    const bool ctx_empty = std::all_of(pair.context_turns.begin(), pair.context_turns.end(),
                                       blank) ||
                           pair.context_turns.empty();
    if (ctx_empty || blank(pair.response)) {
      ++result.skipped;
      continue;
    }
    result.pairs.push_back(std::move(pair));
  }
  return result;
}

void save_corpus(const std::vector<RawPair>& pairs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("save_corpus: cannot open '" + path + "' for writing");
  for (const RawPair& p : pairs) {
    nlohmann::json rec;
    if (p.context_turns.size() == 1)
      rec["context"] = p.context_turns[0];
    else
      rec["context"] = p.context_turns;
    rec["response"] = p.response;
    out << rec.dump() << '\n';
  }
  if (!out) throw ParseError("save_corpus: write failure on '" + path + "'");
}

Vocabulary build_vocab(const std::vector<RawPair>& pairs, std::size_t max_size) {
  if (max_size <= kReservedTokens)
    throw ContractError("build_vocab: max_size must exceed the " +
                        std::to_string(kReservedTokens) + " reserved tokens");
  std::unordered_map<std::string, std::size_t> counts;
  std::unordered_map<std::string, std::size_t> first_seen;
  std::size_t order = 0;
  auto feed = [&](const std::string& text) {
    for (std::string& tok : tokenize(text)) {
      auto [it, fresh] = first_seen.emplace(tok, order);
      if (fresh) ++order;
      ++counts[std::move(tok)];
    }
  };
  for (const RawPair& p : pairs) {
    for (const std::string& turn : p.context_turns) feed(turn);
    feed(p.response);
  }

  std::vector<std::string> ranked;
  ranked.reserve(counts.size());
  for (const auto& [tok, _] : counts) ranked.push_back(tok);
  std::sort(ranked.begin(), ranked.end(), [&](const std::string& a, const std::string& b) {
    if (counts[a] != counts[b]) return counts[a] > counts[b];
    return first_seen[a] < first_seen[b];
  });

  Vocabulary v;
  const std::size_t keep = std::min(ranked.size(), max_size - kReservedTokens);
  for (std::size_t i = 0; i < keep; ++i) v.add(ranked[i]);
  return v;
}

DialoguePair encode_pair(const RawPair& raw, const Vocabulary& vocab) {
  DialoguePair out;
  for (const std::string& turn : raw.context_turns) {
    for (const std::string& tok : tokenize(turn)) out.context.push_back(vocab.id(tok));
    out.context.push_back(kSepId);
  }
  out.response = encode_response(raw.response, vocab);
  return out;
}

std::vector<TokenId> encode_response(const std::string& text, const Vocabulary& vocab) {
  std::vector<TokenId> out;
  for (const std::string& tok : tokenize(text)) out.push_back(vocab.id(tok));
  out.push_back(kEosId);
  return out;
}

EncodedCorpus encode_corpus(const std::vector<RawPair>& raw, const Vocabulary& vocab,
                            std::size_t max_positions) {
  EncodedCorpus out;
  for (const RawPair& rp : raw) {
    DialoguePair enc = encode_pair(rp, vocab);
    const std::size_t n = enc.response.size();
    if (n + 1 > max_positions) {  // cannot fit even a single context token
      ++out.dropped;
      continue;
    }
    if (enc.context.size() + n > max_positions) {
      const std::size_t keep = max_positions - n;
      enc.context.erase(enc.context.begin(),
                        enc.context.end() - static_cast<std::ptrdiff_t>(keep));
      ++out.truncated;
    }
    out.pairs.push_back(std::move(enc));
  }
  return out;
}

std::vector<TokenId> Batch::context_of(std::size_t i) const {
  std::vector<TokenId> out;
  for (std::size_t j = 0; j < ctx_width; ++j)
    if (context_mask[i * ctx_width + j]) out.push_back(context_ids[i * ctx_width + j]);
  return out;
}

std::vector<TokenId> Batch::response_of(std::size_t i) const {
  std::vector<TokenId> out;
  for (std::size_t j = 0; j < rsp_width; ++j)
    if (response_mask[i * rsp_width + j]) out.push_back(response_ids[i * rsp_width + j]);
  return out;
}

std::vector<Batch> make_batches(const std::vector<DialoguePair>& pairs,
                                std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ContractError("make_batches: batch_size must be positive");
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, order.size() - start);
    Batch b;
    b.size = count;
    for (std::size_t i = 0; i < count; ++i) {
      const DialoguePair& p = pairs[order[start + i]];
      b.ctx_width = std::max(b.ctx_width, p.context.size());
      b.rsp_width = std::max(b.rsp_width, p.response.size());
      b.pair_indices.push_back(order[start + i]);
    }
    b.context_ids.assign(count * b.ctx_width, kPadId);
    b.context_mask.assign(count * b.ctx_width, 0);
    b.response_ids.assign(count * b.rsp_width, kPadId);
    b.response_mask.assign(count * b.rsp_width, 0);
    for (std::size_t i = 0; i < count; ++i) {
      const DialoguePair& p = pairs[b.pair_indices[i]];
      for (std::size_t j = 0; j < p.context.size(); ++j) {
        b.context_ids[i * b.ctx_width + j] = p.context[j];
        b.context_mask[i * b.ctx_width + j] = 1;
      }
      for (std::size_t j = 0; j < p.response.size(); ++j) {
        b.response_ids[i * b.rsp_width + j] = p.response[j];
        b.response_mask[i * b.rsp_width + j] = 1;
      }
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

std::vector<RawPair> make_synthetic_corpus(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<RawPair> out;
  std::unordered_map<std::string, bool> seen;
  while (out.size() < count) {
    const std::size_t len = 3 + rng.uniform_int(6);  // 3..8 symbols
    std::vector<std::string> symbols(len);
    for (std::string& s : symbols)
      s = std::string(1, static_cast<char>('a' + rng.uniform_int(20)));
    std::string context = detokenize(symbols);
    if (seen.count(context)) continue;
    seen.emplace(context, true);
    std::reverse(symbols.begin(), symbols.end());
    RawPair p;
    p.context_turns.push_back(std::move(context));
    p.response = detokenize(symbols);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace rad
