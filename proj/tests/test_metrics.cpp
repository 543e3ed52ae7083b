#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <list>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rad/data.hpp"
#include "rad/errors.hpp"
#include "rad/metrics.hpp"
#include "rad/rng.hpp"

using namespace rad;

namespace {

using Words = std::vector<std::string>;
using Corpus = std::vector<Words>;

// bag overlap by greedy one-to-one matching against a shrinking pool
double oracle_f1(const Words& cand, const Words& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  std::list<std::string> pool(ref.begin(), ref.end());
  std::size_t overlap = 0;
  for (const std::string& w : cand) {
    auto it = std::find(pool.begin(), pool.end(), w);
    if (it != pool.end()) {
      pool.erase(it);
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double p = double(overlap) / double(cand.size());
  const double r = double(overlap) / double(ref.size());
  return 2.0 * p * r / (p + r);
}

std::vector<std::string> joined_ngrams(const Words& w, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i + n <= w.size(); ++i) {
    std::string g;
    for (std::size_t j = 0; j < n; ++j) {
      g += w[i + j];
      g.push_back('\x1f');
    }
    out.push_back(g);
  }
  return out;
}

double oracle_precision(const Corpus& cands, const Corpus& refs, std::size_t n) {
  long long clipped = 0;
  long long total = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    std::vector<std::string> cg = joined_ngrams(cands[i], n);
    std::list<std::string> pool;
    for (const std::string& g : joined_ngrams(refs[i], n)) pool.push_back(g);
    for (const std::string& g : cg) {
      ++total;
      auto it = std::find(pool.begin(), pool.end(), g);
      if (it != pool.end()) {
        pool.erase(it);
        ++clipped;
      }
    }
  }
  return total ? double(clipped) / double(total) : 0.0;
}

BleuScores oracle_bleu(const Corpus& cands, const Corpus& refs) {
  long long c = 0;
  long long r = 0;
  for (const Words& w : cands) c += static_cast<long long>(w.size());
  for (const Words& w : refs) r += static_cast<long long>(w.size());
  BleuScores out;
  if (c == 0) return out;
  const double bp = c >= r ? 1.0 : std::exp(1.0 - double(r) / double(c));
  const double p1 = oracle_precision(cands, refs, 1);
  const double p2 = oracle_precision(cands, refs, 2);
  out.bleu1 = bp * p1;
  out.bleu2 = (p1 > 0.0 && p2 > 0.0) ? bp * std::sqrt(p1 * p2) : 0.0;
  return out;
}

double oracle_distinct(const Corpus& responses, std::size_t n) {
  std::set<std::string> unique;
  long long total = 0;
  for (const Words& w : responses)
    for (const std::string& g : joined_ngrams(w, n)) {
      unique.insert(g);
      ++total;
    }
  return total ? double(unique.size()) / double(total) : 0.0;
}

Corpus random_corpus(Rng& rng, std::size_t pairs, bool allow_empty) {
  const char* lexicon[4] = {"u", "v", "w", "x"};
  Corpus c;
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::size_t len = (allow_empty ? 0 : 1) +
                            rng.uniform_int(allow_empty ? 7 : 6);
    Words w;
    for (std::size_t j = 0; j < len; ++j) w.push_back(lexicon[rng.uniform_int(4)]);
    c.push_back(std::move(w));
  }
  return c;
}

}  // namespace

TEST_CASE("unigram overlap scoring") {
  CHECK(f1_score({"a", "b", "c"}, {"a", "b", "c"}) == 1.0);
  CHECK(f1_score({"a", "b"}, {"c", "d"}) == 0.0);
  CHECK(f1_score({}, {"a"}) == 0.0);
  CHECK(f1_score({"a"}, {}) == 0.0);
  CHECK(f1_score({"a", "b", "b"}, {"a", "b", "c"}) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  // multiplicity caps at the rarer side
  CHECK(f1_score({"a", "a", "a", "a"}, {"a", "a"}) ==
        doctest::Approx(2.0 * 0.5 * 1.0 / 1.5).epsilon(1e-15));
}

TEST_CASE("bleu on identical corpora is exactly one") {
  Corpus c = {{"the", "cat", "sat"}, {"a", "b"}};
  BleuScores s = bleu(c, c);
  CHECK(s.bleu1 == 1.0);
  CHECK(s.bleu2 == 1.0);
}

TEST_CASE("bleu clips repeated candidate words") {
  BleuScores s = bleu({{"the", "the", "the"}}, {{"the", "cat"}});
  CHECK(s.bleu1 == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(s.bleu2 == 0.0);  // no candidate bigram survives
}

TEST_CASE("bleu applies the brevity penalty for short candidates") {
  BleuScores s = bleu({{"a"}}, {{"a", "b", "c"}});
  CHECK(s.bleu1 == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));
}

TEST_CASE("bleu input contracts") {
  CHECK_THROWS_AS(bleu({}, {}), ContractError);
  CHECK_THROWS_AS(bleu({{"a"}}, {{"a"}, {"b"}}), ContractError);
}

TEST_CASE("distinct pools ngrams across the corpus") {
  CHECK(distinct_n({{"a", "b"}}, 1) == 1.0);
  CHECK(distinct_n({{"a", "a", "a"}}, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(distinct_n({{"a", "b"}, {"a", "b"}}, 2) == 0.5);
  CHECK(distinct_n({{"a"}}, 2) == 0.0);  // nothing of that order
  CHECK_THROWS_AS(distinct_n({{"a"}}, 0), ContractError);
}

TEST_CASE("appending a duplicate response never raises distinctness") {
  Rng rng(71);
  for (int trial = 0; trial < 50; ++trial) {
    Corpus c = random_corpus(rng, 1 + rng.uniform_int(4), false);
    for (std::size_t n = 1; n <= 2; ++n) {
      const double before = distinct_n(c, n);
      Corpus doubled = c;
      doubled.push_back(c[rng.uniform_int(c.size())]);
      CHECK(distinct_n(doubled, n) <= before + 1e-15);
    }
  }
}

TEST_CASE("metrics agree with counting oracles on random micro-corpora") {
  Rng rng(72);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t pairs = 1 + rng.uniform_int(5);
    Corpus cands = random_corpus(rng, pairs, true);
    Corpus refs = random_corpus(rng, pairs, true);
    if (std::all_of(cands.begin(), cands.end(),
                    [](const Words& w) { return w.empty(); }))
      cands[0] = {"u"};

    for (std::size_t i = 0; i < pairs; ++i)
      CHECK(f1_score(cands[i], refs[i]) ==
            doctest::Approx(oracle_f1(cands[i], refs[i])).epsilon(1e-12));

    BleuScores mine = bleu(cands, refs);
    BleuScores theirs = oracle_bleu(cands, refs);
    CHECK(mine.bleu1 == doctest::Approx(theirs.bleu1).epsilon(1e-12));
    CHECK(mine.bleu2 == doctest::Approx(theirs.bleu2).epsilon(1e-12));

    for (std::size_t n = 1; n <= 2; ++n)
      CHECK(distinct_n(cands, n) ==
            doctest::Approx(oracle_distinct(cands, n)).epsilon(1e-12));
  }
}

TEST_CASE("metrics ignore corpus order") {
  Rng rng(73);
  Corpus cands = random_corpus(rng, 6, false);
  Corpus refs = random_corpus(rng, 6, false);

  std::vector<std::size_t> perm = {4, 0, 5, 2, 1, 3};
  Corpus pc, pr;
  for (std::size_t i : perm) {
    pc.push_back(cands[i]);
    pr.push_back(refs[i]);
  }

  MetricsReport a = evaluate_corpus(cands, refs);
  MetricsReport b = evaluate_corpus(pc, pr);
  CHECK(a.f1 == doctest::Approx(b.f1).epsilon(1e-12));
  CHECK(a.bleu1 == b.bleu1);
  CHECK(a.bleu2 == b.bleu2);
  CHECK(a.distinct1 == b.distinct1);
  CHECK(a.distinct2 == b.distinct2);
}

TEST_CASE("corpus evaluation assembles all metrics") {
  Corpus cands = {{"a", "b"}, {"c"}, {}};
  Corpus refs = {{"a", "b"}, {"c", "d"}, {"e"}};
  MetricsReport r = evaluate_corpus(cands, refs);
  CHECK(r.pairs == 3);
  CHECK(r.empty_inputs == 1);
  const double expect_f1 = (1.0 + 2.0 * (1.0 / 1.0) * (1.0 / 2.0) / 1.5 + 0.0) / 3.0;
  CHECK(r.f1 == doctest::Approx(expect_f1).epsilon(1e-14));
  CHECK(r.bleu1 == bleu(cands, refs).bleu1);
  CHECK(r.distinct2 == distinct_n(cands, 2));

  nlohmann::json parsed = nlohmann::json::parse(r.to_json());
  CHECK(parsed["pairs"] == 3);
  CHECK(parsed["f1"].get<double>() == doctest::Approx(r.f1).epsilon(1e-15));
  CHECK(r.to_text().find("x100") != std::string::npos);
  CHECK(r.to_text().find("DISTINCT-2") != std::string::npos);

  CHECK_THROWS_AS(evaluate_corpus({}, {}), ContractError);
}

TEST_CASE("control ids are stripped before scoring") {
  Vocabulary v;
  v.add("hello");
  v.add("there");
  const std::vector<TokenId> ids = {kBosId, 5, kSepId, 6, kUnkId, kEosId, kPadId};
  CHECK(words_from_ids(ids, v) == Words{"hello", "there", "<unk>"});
}

TEST_CASE("rater agreement statistic") {
  // unanimity over mixed categories
  RaterMatrix perfect;
  perfect.items = 3;
  perfect.categories = 2;
  perfect.counts = {3, 0, 0, 3, 3, 0};
  CHECK(fleiss_kappa(perfect) == 1.0);

  // two items, two raters, one disagreement
  RaterMatrix half;
  half.items = 2;
  half.categories = 2;
  half.counts = {2, 0, 1, 1};
  CHECK(fleiss_kappa(half) == doctest::Approx(-1.0 / 3.0).epsilon(1e-15));

  // every rating in a single category is still perfect agreement
  RaterMatrix degenerate;
  degenerate.items = 2;
  degenerate.categories = 2;
  degenerate.counts = {2, 0, 2, 0};
  CHECK(fleiss_kappa(degenerate) == 1.0);

  // a mostly-agreeing panel lands in the moderate band
  RaterMatrix moderate;
  moderate.items = 6;
  moderate.categories = 3;
  moderate.counts = {0, 4, 0, 1, 2, 1, 0, 0, 4, 0, 0, 4, 1, 0, 3, 2, 2, 0};
  const double k = fleiss_kappa(moderate);
  CHECK(k == doctest::Approx(0.45454545454545453).epsilon(1e-12));
  CHECK(k > 0.4);
  CHECK(k < 0.5);
}

TEST_CASE("rater agreement matches the direct formula on random panels") {
  Rng rng(74);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t items = 2 + rng.uniform_int(6);
    const std::size_t cats = 2 + rng.uniform_int(3);
    const std::size_t raters = 2 + rng.uniform_int(4);
    RaterMatrix m;
    m.items = items;
    m.categories = cats;
    m.counts.assign(items * cats, 0);
    for (std::size_t i = 0; i < items; ++i)
      for (std::size_t r = 0; r < raters; ++r)
        ++m.counts[i * cats + rng.uniform_int(cats)];

    const double n = double(raters);
    double p_bar = 0.0;
    for (std::size_t i = 0; i < items; ++i) {
      double agree = 0.0;
      for (std::size_t j = 0; j < cats; ++j) {
        const double c = double(m.at(i, j));
        agree += c * (c - 1.0);
      }
      p_bar += agree / (n * (n - 1.0));
    }
    p_bar /= double(items);
    double pe = 0.0;
    for (std::size_t j = 0; j < cats; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < items; ++i) col += double(m.at(i, j));
      const double pj = col / (double(items) * n);
      pe += pj * pj;
    }
    if (pe >= 1.0) continue;
    CHECK(fleiss_kappa(m) ==
          doctest::Approx((p_bar - pe) / (1.0 - pe)).epsilon(1e-12));
  }
}

TEST_CASE("rater matrix validation and csv loading") {
  RaterMatrix ragged;
  ragged.items = 2;
  ragged.categories = 2;
  ragged.counts = {2, 0, 1, 2};  // rows sum to 2 and 3
  CHECK_THROWS_AS(ragged.validate(), ContractError);

  RaterMatrix lonely;
  lonely.items = 1;
  lonely.categories = 2;
  lonely.counts = {2, 0};
  CHECK_THROWS_AS(lonely.validate(), ContractError);

  RaterMatrix solo;
  solo.items = 2;
  solo.categories = 2;
  solo.counts = {1, 0, 0, 1};  // a single rater
  CHECK_THROWS_AS(solo.validate(), ContractError);

  const std::string path =
      (std::filesystem::temp_directory_path() / "rad_raters.csv").string();
  {
    std::ofstream out(path);
    out << "3,0,1\n1,2,1\n0,0,4\n";
  }
  RaterMatrix loaded = RaterMatrix::load_csv(path);
  CHECK(loaded.items == 3);
  CHECK(loaded.categories == 3);
  CHECK(loaded.at(1, 1) == 2);
  fleiss_kappa(loaded);  // well-formed input computes

  {
    std::ofstream out(path);
    out << "3,0\n1,x\n";
  }
  CHECK_THROWS_AS(RaterMatrix::load_csv(path), ParseError);
  {
    std::ofstream out(path);
    out << "3,0\n1,1,1\n";
  }
  CHECK_THROWS_AS(RaterMatrix::load_csv(path), ParseError);
  std::filesystem::remove(path);
}
