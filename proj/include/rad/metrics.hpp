// Evaluation suite: bag-of-unigrams F1, corpus BLEU-1/2 with clipping and
// brevity penalty, corpus-pooled DISTINCT-n, and Fleiss' kappa for rater
// agreement. All text metrics operate on word sequences with the control
// tokens already stripped.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rad/data.hpp"

namespace rad {

struct MetricsReport {
  double f1 = 0.0;
  double bleu1 = 0.0;
  double bleu2 = 0.0;
  double distinct1 = 0.0;
  double distinct2 = 0.0;
  std::size_t pairs = 0;
  std::size_t empty_inputs = 0;  // pairs scored 0 because a side was empty

  std::string to_json() const;
  // Aligned table with raw [0,1] values and x100 columns.
  std::string to_text() const;
};

struct BleuScores {
  double bleu1 = 0.0;
  double bleu2 = 0.0;
};

// Drops the PAD/BOS/SEP/EOS control ids and maps the rest to their tokens;
// unknown-word ids survive as their placeholder token.
std::vector<std::string> words_from_ids(const std::vector<TokenId>& ids,
                                        const Vocabulary& vocab);

// Unigram bag overlap: precision over the candidate, recall over the
// reference, harmonic mean. Either side empty scores 0.
double f1_score(const std::vector<std::string>& candidate,
                const std::vector<std::string>& reference);

// Corpus-level BLEU with per-pair clipped n-gram counts pooled before the
// precision quotient, and brevity penalty min(1, e^{1 - r/c}).
BleuScores bleu(const std::vector<std::vector<std::string>>& candidates,
                const std::vector<std::vector<std::string>>& references);

// Unique n-grams over total n-grams, pooled across all responses; 0 when the
// corpus has no n-grams of this order.
double distinct_n(const std::vector<std::vector<std::string>>& responses,
                  std::size_t n);

// Mean per-pair F1 plus corpus BLEU and DISTINCT over the candidates.
MetricsReport evaluate_corpus(const std::vector<std::vector<std::string>>& candidates,
                              const std::vector<std::vector<std::string>>& references);

struct RaterMatrix {
  std::size_t items = 0;
  std::size_t categories = 0;
  std::vector<std::size_t> counts;  // row-major item x category

  std::size_t at(std::size_t item, std::size_t category) const {
    return counts[item * categories + category];
  }
  // Every row must sum to the same rater count, at least 2; needs >= 2 items.
  void validate() const;
  static RaterMatrix load_csv(const std::string& path);
};

double fleiss_kappa(const RaterMatrix& ratings);

}  // namespace rad
