#include "rad/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "rad/errors.hpp"

namespace rad {

namespace {

using Counts = std::map<std::vector<std::string>, std::size_t>;

Counts ngram_bag(const std::vector<std::string>& words, std::size_t n) {
  Counts bag;
  if (words.size() >= n && n > 0)
    for (std::size_t i = 0; i + n <= words.size(); ++i)
      ++bag[std::vector<std::string>(words.begin() + i, words.begin() + i + n)];
  return bag;
}

}  // namespace

std::vector<std::string> words_from_ids(const std::vector<TokenId>& ids,
                                        const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (TokenId id : ids) {
    if (id == kPadId || id == kBosId || id == kSepId || id == kEosId) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

double f1_score(const std::vector<std::string>& candidate,
                const std::vector<std::string>& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  Counts cand = ngram_bag(candidate, 1);
  Counts ref = ngram_bag(reference, 1);
  std::size_t overlap = 0;
  for (const auto& [gram, count] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(count, it->second);
  }
  if (overlap == 0) return 0.0;
  const double precision =
      static_cast<double>(overlap) / static_cast<double>(candidate.size());
  const double recall =
      static_cast<double>(overlap) / static_cast<double>(reference.size());
  return 2.0 * precision * recall / (precision + recall);
}

BleuScores bleu(const std::vector<std::vector<std::string>>& candidates,
                const std::vector<std::vector<std::string>>& references) {
  if (candidates.empty()) throw ContractError("bleu: empty corpus");
  if (candidates.size() != references.size())
    throw ContractError("bleu: " + std::to_string(candidates.size()) +
                        " candidates vs " + std::to_string(references.size()) +
                        " references");

  std::size_t cand_len = 0;
  std::size_t ref_len = 0;
  std::size_t clipped[2] = {0, 0};
  std::size_t total[2] = {0, 0};
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += candidates[i].size();
    ref_len += references[i].size();
    for (std::size_t n = 1; n <= 2; ++n) {
      Counts cand = ngram_bag(candidates[i], n);
      Counts ref = ngram_bag(references[i], n);
      for (const auto& [gram, count] : cand) {
        total[n - 1] += count;
        auto it = ref.find(gram);
        if (it != ref.end()) clipped[n - 1] += std::min(count, it->second);
      }
    }
  }

  BleuScores out;
  if (cand_len == 0) return out;
  const double bp =
      std::min(1.0, std::exp(1.0 - static_cast<double>(ref_len) /
                                       static_cast<double>(cand_len)));
  const double p1 = total[0] ? static_cast<double>(clipped[0]) / total[0] : 0.0;
  const double p2 = total[1] ? static_cast<double>(clipped[1]) / total[1] : 0.0;
  out.bleu1 = bp * p1;
  out.bleu2 = (p1 > 0.0 && p2 > 0.0) ? bp * std::sqrt(p1 * p2) : 0.0;
  return out;
}

double distinct_n(const std::vector<std::vector<std::string>>& responses,
                  std::size_t n) {
  if (n == 0) throw ContractError("distinct_n: order must be positive");
  Counts pooled;
  std::size_t total = 0;
  for (const auto& response : responses)
    for (auto& [gram, count] : ngram_bag(response, n)) {
      pooled[gram] += count;
      total += count;
    }
  if (total == 0) return 0.0;
  return static_cast<double>(pooled.size()) / static_cast<double>(total);
}

MetricsReport evaluate_corpus(
    const std::vector<std::vector<std::string>>& candidates,
    const std::vector<std::vector<std::string>>& references) {
  if (candidates.empty()) throw ContractError("evaluate_corpus: empty corpus");
  if (candidates.size() != references.size())
    throw ContractError("evaluate_corpus: candidate/reference counts differ");

  MetricsReport report;
  report.pairs = candidates.size();
  double f1_sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].empty() || references[i].empty()) ++report.empty_inputs;
    f1_sum += f1_score(candidates[i], references[i]);
  }
  report.f1 = f1_sum / static_cast<double>(candidates.size());
  const BleuScores b = bleu(candidates, references);
  report.bleu1 = b.bleu1;
  report.bleu2 = b.bleu2;
  report.distinct1 = distinct_n(candidates, 1);
  report.distinct2 = distinct_n(candidates, 2);
  return report;
}

std::string MetricsReport::to_json() const {
  nlohmann::json j = {{"f1", f1},
                      {"bleu1", bleu1},
                      {"bleu2", bleu2},
                      {"distinct1", distinct1},
                      {"distinct2", distinct2},
                      {"pairs", pairs},
                      {"empty_inputs", empty_inputs}};
  return j.dump();
}

std::string MetricsReport::to_text() const {
  char buf[256];
  std::string out;
  out += "metric      value     x100\n";
  const char* names[5] = {"F1", "BLEU-1", "BLEU-2", "DISTINCT-1", "DISTINCT-2"};
  const double vals[5] = {f1, bleu1, bleu2, distinct1, distinct2};
  for (int i = 0; i < 5; ++i) {
    std::snprintf(buf, sizeof(buf), "%-10s  %.6f  %7.3f\n", names[i], vals[i],
                  100.0 * vals[i]);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "pairs: %zu (empty inputs: %zu)\n", pairs,
                empty_inputs);
  out += buf;
  return out;
}

void RaterMatrix::validate() const {
  if (items < 2) throw ContractError("RaterMatrix: need at least 2 items");
  if (categories == 0) throw ContractError("RaterMatrix: need at least 1 category");
  if (counts.size() != items * categories)
    throw ContractError("RaterMatrix: count grid does not match its dimensions");
  std::size_t raters = 0;
  for (std::size_t i = 0; i < items; ++i) {
    std::size_t row = 0;
    for (std::size_t j = 0; j < categories; ++j) row += at(i, j);
    if (i == 0)
      raters = row;
    else if (row != raters)
      throw ContractError("RaterMatrix: row " + std::to_string(i) + " sums to " +
                          std::to_string(row) + ", expected " +
                          std::to_string(raters));
  }
  if (raters < 2) throw ContractError("RaterMatrix: need at least 2 raters");
}

RaterMatrix RaterMatrix::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_csv: cannot open '" + path + "'");
  RaterMatrix m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::size_t> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        const long long v = std::stoll(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used])))
          ++used;
        if (used != cell.size() || v < 0) throw std::invalid_argument(cell);
        row.push_back(static_cast<std::size_t>(v));
      } catch (const std::exception&) {
        throw ParseError("load_csv: line " + std::to_string(lineno) +
                         ": bad count '" + cell + "'");
      }
    }
    if (m.categories == 0)
      m.categories = row.size();
    else if (row.size() != m.categories)
      throw ParseError("load_csv: line " + std::to_string(lineno) + " has " +
                       std::to_string(row.size()) + " columns, expected " +
                       std::to_string(m.categories));
    m.counts.insert(m.counts.end(), row.begin(), row.end());
    ++m.items;
  }
  m.validate();
  return m;
}

double fleiss_kappa(const RaterMatrix& ratings) {
  ratings.validate();
  const double items = static_cast<double>(ratings.items);
  std::size_t raters_count = 0;
  for (std::size_t j = 0; j < ratings.categories; ++j) raters_count += ratings.at(0, j);
  const double n = static_cast<double>(raters_count);

  double p_bar = 0.0;
  for (std::size_t i = 0; i < ratings.items; ++i) {
    double sum_sq = 0.0;
    for (std::size_t j = 0; j < ratings.categories; ++j) {
      const double c = static_cast<double>(ratings.at(i, j));
      sum_sq += c * c;
    }
    p_bar += (sum_sq - n) / (n * (n - 1.0));
  }
  p_bar /= items;

  double pe_bar = 0.0;
  for (std::size_t j = 0; j < ratings.categories; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < ratings.items; ++i)
      col += static_cast<double>(ratings.at(i, j));
    const double p_j = col / (items * n);
    pe_bar += p_j * p_j;
  }

  if (pe_bar >= 1.0) {
    if (p_bar >= 1.0) return 1.0;
    throw NumericError("fleiss_kappa: degenerate category distribution");
  }
  return (p_bar - pe_bar) / (1.0 - pe_bar);
}

}  // namespace rad
