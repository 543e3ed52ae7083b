#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rad/data.hpp"
#include "rad/errors.hpp"
#include "rad/rng.hpp"

using namespace rad;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

}  // namespace

TEST_CASE("tokenizer splits on whitespace and punctuation") {
  CHECK(tokenize("hello, world!") ==
        std::vector<std::string>{"hello", ",", "world", "!"});
  CHECK(tokenize("it's") == std::vector<std::string>{"it", "'", "s"});
  CHECK(tokenize("a--b") == std::vector<std::string>{"a", "-", "-", "b"});
  CHECK(tokenize("  spaced \t out\nlines ") ==
        std::vector<std::string>{"spaced", "out", "lines"});
  CHECK(tokenize("") == std::vector<std::string>{});
  CHECK(tokenize("   ") == std::vector<std::string>{});
}

TEST_CASE("tokenizer keeps multi-byte characters inside words") {
  CHECK(tokenize("café") == std::vector<std::string>{"café"});
  CHECK(tokenize("naïve approach") == std::vector<std::string>{"naïve", "approach"});
}

TEST_CASE("detokenize then tokenize reproduces the token sequence") {
  for (const std::string& text :
       {std::string("hello, world!"), std::string("  a \t b  c "),
        std::string("don't--stop"), std::string("café ☕ time")}) {
    const auto tokens = tokenize(text);
    CHECK(tokenize(detokenize(tokens)) == tokens);
  }
}

TEST_CASE("vocabulary reserves control tokens") {
  Vocabulary v;
  CHECK(v.size() == 5);
  CHECK(v.token(kPadId) == "<pad>");
  CHECK(v.token(kBosId) == "<bos>");
  CHECK(v.token(kSepId) == "<sep>");
  CHECK(v.token(kEosId) == "<eos>");
  CHECK(v.token(kUnkId) == "<unk>");
  CHECK(v.id("<sep>") == kSepId);
  CHECK(v.id("anything else") == kUnkId);
  CHECK_FALSE(v.contains("zebra"));
}

TEST_CASE("vocabulary add assigns sequential ids and rejects bad input") {
  Vocabulary v;
  CHECK(v.add("alpha") == 5);
  CHECK(v.add("beta") == 6);
  CHECK(v.id("alpha") == 5);
  CHECK(v.contains("beta"));
  CHECK_THROWS_AS(v.add("alpha"), VocabularyError);
  CHECK_THROWS_AS(v.add(""), VocabularyError);
  CHECK_THROWS_AS(v.token(-1), VocabularyError);
  CHECK_THROWS_AS(v.token(7), VocabularyError);
}

TEST_CASE("build_vocab ranks by frequency then first occurrence") {
  std::vector<RawPair> pairs;
  RawPair p;
  p.context_turns = {"a a"};
  p.response = "b";
  pairs.push_back(p);

  Vocabulary seven = build_vocab(pairs, 7);
  CHECK(seven.size() == 7);
  CHECK(seven.id("a") == 5);
  CHECK(seven.id("b") == 6);

  Vocabulary six = build_vocab(pairs, 6);
  CHECK(six.size() == 6);
  CHECK(six.id("a") == 5);
  CHECK(six.id("b") == kUnkId);

  CHECK_THROWS_AS(build_vocab(pairs, 5), ContractError);

  RawPair tie;
  tie.context_turns = {"b a"};
  tie.response = "b a";
  Vocabulary tied = build_vocab({tie}, 10);
  CHECK(tied.id("b") == 5);  // equal counts, "b" appeared first
  CHECK(tied.id("a") == 6);
}

TEST_CASE("build_vocab matches a brute-force counter") {
  const char* words[] = {"red", "green", "blue", "cyan", "plum", "teal"};
  std::vector<RawPair> pairs;
  Rng rng(303);
  for (int i = 0; i < 40; ++i) {
    RawPair p;
    std::string ctx;
    const std::size_t len = 2 + rng.uniform_int(5);
    for (std::size_t j = 0; j < len; ++j) {
      if (j) ctx.push_back(' ');
      ctx += words[rng.uniform_int(6)];
    }
    p.context_turns = {ctx};
    p.response = words[rng.uniform_int(6)];
    pairs.push_back(p);
  }

  std::map<std::string, int> counts;
  std::map<std::string, int> first_seen;
  int order = 0;
  for (const RawPair& p : pairs) {
    for (const std::string& text : {p.context_turns[0], p.response}) {
      for (const std::string& tok : tokenize(text)) {
        if (!first_seen.count(tok)) first_seen[tok] = order++;
        ++counts[tok];
      }
    }
  }
  std::vector<std::string> expect;
  for (const auto& [tok, _] : counts) expect.push_back(tok);
  std::sort(expect.begin(), expect.end(), [&](const auto& a, const auto& b) {
    if (counts[a] != counts[b]) return counts[a] > counts[b];
    return first_seen[a] < first_seen[b];
  });

  Vocabulary v = build_vocab(pairs, 100);
  REQUIRE(v.size() == expect.size() + kReservedTokens);
  for (std::size_t i = 0; i < expect.size(); ++i)
    CHECK(v.id(expect[i]) == static_cast<TokenId>(i + kReservedTokens));
}

TEST_CASE("vocabulary save and load round-trip") {
  RawPair p;
  p.context_turns = {"one two two"};
  p.response = "three three three";
  Vocabulary v = build_vocab({p}, 20);

  const std::string path = temp_path("rad_vocab_roundtrip.txt");
  v.save(path);
  Vocabulary loaded = Vocabulary::load(path);
  REQUIRE(loaded.size() == v.size());
  for (TokenId id = 0; id < static_cast<TokenId>(v.size()); ++id)
    CHECK(loaded.token(id) == v.token(id));
  CHECK(loaded.id("three") == v.id("three"));
  std::filesystem::remove(path);
}

TEST_CASE("vocabulary load rejects tampered reserved tokens") {
  const std::string path = temp_path("rad_vocab_tampered.txt");
  write_file(path, "<pad>\n<bos>\nWRONG\n<eos>\n<unk>\nword\n");
  CHECK_THROWS_AS(Vocabulary::load(path), ParseError);

  write_file(path, "<pad>\n<bos>\n");
  CHECK_THROWS_AS(Vocabulary::load(path), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("load_corpus reads jsonl with string or turn-list contexts") {
  const std::string path = temp_path("rad_corpus_ok.jsonl");
  write_file(path,
             "{\"context\": \"hi there\", \"response\": \"hello\"}\n"
             "\n"
             "{\"context\": [\"first turn\", \"second turn\"], \"response\": \"reply\"}\n");
  CorpusLoad load = load_corpus(path);
  REQUIRE(load.pairs.size() == 2);
  CHECK(load.skipped == 0);
  CHECK(load.pairs[0].context_turns == std::vector<std::string>{"hi there"});
  CHECK(load.pairs[0].response == "hello");
  CHECK(load.pairs[1].context_turns ==
        std::vector<std::string>{"first turn", "second turn"});
  CHECK(load.pairs[1].response == "reply");
  std::filesystem::remove(path);
}

TEST_CASE("load_corpus names the offending line") {
  const std::string path = temp_path("rad_corpus_bad.jsonl");
  write_file(path,
             "{\"context\": \"ok\", \"response\": \"ok\"}\n"
             "{\"context\": \"no reply here\"}\n");
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("line 2"), ParseError);

  write_file(path, "{\"context\": \"x\", \"response\": \"y\"}\nnot json at all\n");
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("line 2"), ParseError);

  write_file(path, "{\"context\": 7, \"response\": \"y\"}\n");
  CHECK_THROWS_AS(load_corpus(path), ParseError);

  write_file(path, "{\"context\": \"x\", \"response\": [\"y\"]}\n");
  CHECK_THROWS_AS(load_corpus(path), ParseError);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(load_corpus(temp_path("rad_no_such_corpus.jsonl")), ParseError);
}

TEST_CASE("load_corpus counts skipped empty records") {
  const std::string path = temp_path("rad_corpus_skip.jsonl");
  write_file(path,
             "{\"context\": \"fine\", \"response\": \"fine\"}\n"
             "{\"context\": \"\", \"response\": \"orphan\"}\n"
             "{\"context\": \"question\", \"response\": \"  \"}\n");
  CorpusLoad load = load_corpus(path);
  CHECK(load.pairs.size() == 1);
  CHECK(load.skipped == 2);
  std::filesystem::remove(path);
}

TEST_CASE("save_corpus round-trips through load_corpus") {
  std::vector<RawPair> pairs(2);
  pairs[0].context_turns = {"single turn"};
  pairs[0].response = "answer one";
  pairs[1].context_turns = {"turn a", "turn b"};
  pairs[1].response = "answer two";

  const std::string path = temp_path("rad_corpus_rt.jsonl");
  save_corpus(pairs, path);
  CorpusLoad load = load_corpus(path);
  REQUIRE(load.pairs.size() == 2);
  CHECK(load.pairs[0].context_turns == pairs[0].context_turns);
  CHECK(load.pairs[1].context_turns == pairs[1].context_turns);
  CHECK(load.pairs[1].response == pairs[1].response);
  std::filesystem::remove(path);
}

TEST_CASE("encode_pair appends separators and the end marker") {
  RawPair raw;
  raw.context_turns = {"a b", "c"};
  raw.response = "d a";
  Vocabulary v = build_vocab({raw}, 20);

  DialoguePair enc = encode_pair(raw, v);
  CHECK(enc.context == std::vector<TokenId>{v.id("a"), v.id("b"), kSepId, v.id("c"),
                                            kSepId});
  CHECK(enc.response == std::vector<TokenId>{v.id("d"), v.id("a"), kEosId});

  CHECK(encode_response("q", v) == std::vector<TokenId>{kUnkId, kEosId});
}

TEST_CASE("encode_corpus truncates long contexts from the left") {
  RawPair raw;
  raw.context_turns = {"a b c d e f g"};
  raw.response = "h i";
  Vocabulary v = build_vocab({raw}, 20);

  DialoguePair full = encode_pair(raw, v);
  REQUIRE(full.context.size() == 8);  // 7 words + separator
  REQUIRE(full.response.size() == 3);

  EncodedCorpus enc = encode_corpus({raw}, v, 8);
  REQUIRE(enc.pairs.size() == 1);
  CHECK(enc.truncated == 1);
  CHECK(enc.dropped == 0);
  const auto& ctx = enc.pairs[0].context;
  REQUIRE(ctx.size() == 5);
  CHECK(std::equal(ctx.begin(), ctx.end(), full.context.end() - 5));

  EncodedCorpus untouched = encode_corpus({raw}, v, 64);
  CHECK(untouched.truncated == 0);
  CHECK(untouched.pairs[0].context == full.context);
}

TEST_CASE("encode_corpus drops pairs whose response cannot fit") {
  RawPair keep;
  keep.context_turns = {"a b c"};
  keep.response = "d";
  RawPair drop;
  drop.context_turns = {"a"};
  drop.response = "e f g h i";
  Vocabulary v = build_vocab({keep, drop}, 30);

  EncodedCorpus enc = encode_corpus({keep, drop}, v, 5);
  REQUIRE(enc.pairs.size() == 1);
  CHECK(enc.dropped == 1);
  CHECK(enc.pairs[0].response == std::vector<TokenId>{v.id("d"), kEosId});

  // a pair that fits only by shrinking the context to a single token survives
  RawPair tight;
  tight.context_turns = {"a b c"};
  tight.response = "d e f";
  EncodedCorpus squeezed = encode_corpus({tight}, v, 5);
  REQUIRE(squeezed.pairs.size() == 1);
  CHECK(squeezed.truncated == 1);
  CHECK(squeezed.pairs[0].context.size() == 1);
  CHECK(squeezed.pairs[0].response.size() == 4);
}

TEST_CASE("make_batches pads with the pad token and recovers rows") {
  std::vector<DialoguePair> pairs(3);
  pairs[0].context = {5, 6, kSepId};
  pairs[0].response = {7, kEosId};
  pairs[1].context = {8, kSepId};
  pairs[1].response = {9, 10, 11, kEosId};
  pairs[2].context = {12, 13, 14, 15, kSepId};
  pairs[2].response = {16, kEosId};

  Rng rng(42);
  std::vector<Batch> batches = make_batches(pairs, 2, rng);
  REQUIRE(batches.size() == 2);
  CHECK(batches[0].size == 2);
  CHECK(batches[1].size == 1);

  std::set<std::size_t> seen;
  for (const Batch& b : batches) {
    CHECK(b.context_ids.size() == b.size * b.ctx_width);
    CHECK(b.response_mask.size() == b.size * b.rsp_width);
    for (std::size_t i = 0; i < b.size; ++i) {
      const DialoguePair& p = pairs[b.pair_indices[i]];
      seen.insert(b.pair_indices[i]);
      CHECK(b.context_of(i) == p.context);
      CHECK(b.response_of(i) == p.response);
      for (std::size_t j = 0; j < b.ctx_width; ++j) {
        if (j < p.context.size()) {
          CHECK(b.context_mask[i * b.ctx_width + j] == 1);
        } else {
          CHECK(b.context_mask[i * b.ctx_width + j] == 0);
          CHECK(b.context_ids[i * b.ctx_width + j] == kPadId);
        }
      }
      for (std::size_t j = p.response.size(); j < b.rsp_width; ++j) {
        CHECK(b.response_mask[i * b.rsp_width + j] == 0);
        CHECK(b.response_ids[i * b.rsp_width + j] == kPadId);
      }
    }
    CHECK(b.ctx_width ==
          std::max(pairs[b.pair_indices[0]].context.size(),
                   pairs[b.pair_indices[b.size - 1]].context.size()));
  }
  CHECK(seen == std::set<std::size_t>{0, 1, 2});

  Rng zero(1);
  CHECK_THROWS_AS(make_batches(pairs, 0, zero), ContractError);
}

TEST_CASE("batch order is a pure function of the seed") {
  std::vector<DialoguePair> pairs(17);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pairs[i].context = {static_cast<TokenId>(5 + i), kSepId};
    pairs[i].response = {static_cast<TokenId>(30 + i), kEosId};
  }

  auto order_for = [&](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::size_t> flat;
    for (const Batch& b : make_batches(pairs, 4, rng))
      flat.insert(flat.end(), b.pair_indices.begin(), b.pair_indices.end());
    return flat;
  };

  const auto a = order_for(7);
  CHECK(a == order_for(7));
  CHECK(a != order_for(8));
  CHECK(a.size() == pairs.size());
}

TEST_CASE("synthetic corpus reverses unique contexts over a small alphabet") {
  std::vector<RawPair> pairs = make_synthetic_corpus(500, 99);
  REQUIRE(pairs.size() == 500);

  std::set<std::string> contexts;
  for (const RawPair& p : pairs) {
    REQUIRE(p.context_turns.size() == 1);
    contexts.insert(p.context_turns[0]);

    std::vector<std::string> ctx_tokens = tokenize(p.context_turns[0]);
    CHECK(ctx_tokens.size() >= 3);
    CHECK(ctx_tokens.size() <= 8);
    for (const std::string& t : ctx_tokens) {
      CHECK(t.size() == 1);
      CHECK(t[0] >= 'a');
      CHECK(t[0] < 'a' + 20);
    }

    std::vector<std::string> reversed = tokenize(p.response);
    std::reverse(reversed.begin(), reversed.end());
    CHECK(reversed == ctx_tokens);

    CHECK(detokenize(tokenize(p.context_turns[0])) == p.context_turns[0]);
    CHECK(detokenize(tokenize(p.response)) == p.response);
  }
  CHECK(contexts.size() == 500);

  std::vector<RawPair> again = make_synthetic_corpus(500, 99);
  for (std::size_t i = 0; i < 500; ++i) {
    CHECK(again[i].context_turns == pairs[i].context_turns);
    CHECK(again[i].response == pairs[i].response);
  }
}
