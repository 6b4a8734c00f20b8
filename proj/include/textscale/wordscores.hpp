#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "textscale/corpus.hpp"

namespace textscale::wordscores {

/// Reference documents with their a priori scores.
struct TrainingSet {
  std::vector<DocKey> keys;
  std::vector<double> scores;

  std::size_t size() const { return keys.size(); }
};

/// Word scores learned from the reference documents.
///
/// A word gets a score only if it occurs in at least one reference document.
/// The score is the average of the reference scores weighted by P(t|w), the
/// share of the word's relative frequency that falls on document t.
struct WordscoresModel {
  std::vector<std::string> words;  // training vocabulary order
  std::vector<double> word_scores;  // NaN where unscored
  std::unordered_map<std::string, std::size_t> index;
  double sigma_t = 0.0;  // population sd of the reference scores
  double min_score = 0.0;
  double max_score = 0.0;
  std::vector<DocKey> training_keys;

  std::optional<double> score(const std::string& word) const;
  std::size_t scored_words() const;
};

/// Score of one virgin document. Relative frequencies are taken over the
/// document's scored tokens only; unscored words do not count toward n_tokens.
struct VirginScore {
  DocKey key;
  double raw = 0.0;
  double variance = 0.0;
  std::uint64_t n_tokens = 0;
  double std_error = 0.0;  // sqrt(variance / n_tokens), raw scale until rescaled
  double rescaled = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool is_rescaled = false;
};

inline constexpr double kZ95 = 1.96;

/// Throws std::invalid_argument for fewer than two reference documents, a
/// key missing from the matrix, an empty reference document, or identical
/// reference scores.
WordscoresModel fit_wordscores(const SparseTermMatrix& matrix, const TrainingSet& training);

/// std::nullopt when the document has no scored token. Throws
/// std::invalid_argument if the key is not in the matrix.
std::optional<VirginScore> score_virgin(const WordscoresModel& model, const SparseTermMatrix& matrix,
                                        const DocKey& key);

/// Scores every listed document; unscorable ones are returned in `unscorable`.
struct ScoringResult {
  std::vector<VirginScore> scores;
  std::vector<DocKey> unscorable;
};
ScoringResult score_documents(const WordscoresModel& model, const SparseTermMatrix& matrix,
                              const std::vector<DocKey>& keys);

/// Rescales raw scores to the reference standard deviation around the virgin
/// mean; standard errors are scaled by the same factor and 95% intervals
/// built around the rescaled score. Throws std::invalid_argument with fewer
/// than 2 scores or when their spread is zero up to rounding (below 1e-12
/// times the largest |raw score|).
std::vector<VirginScore> rescale(std::vector<VirginScore> scores, const WordscoresModel& model);

/// Population standard deviation.
double population_sd(const std::vector<double>& values);

}  // namespace textscale::wordscores
