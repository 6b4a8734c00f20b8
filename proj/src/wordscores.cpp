#include "textscale/wordscores.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace textscale::wordscores {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Maps each matrix word to the model's score (NaN when unscored).
std::vector<double> align_scores(const WordscoresModel& model, const SparseTermMatrix& matrix) {
  if (matrix.vocab().words() == model.words) return model.word_scores;
  std::vector<double> out(matrix.n_words(), kNaN);
  for (std::size_t i = 0; i < matrix.n_words(); ++i) {
    if (auto s = model.score(matrix.vocab().word(i))) out[i] = *s;
  }
  return out;
}

std::optional<VirginScore> score_column(const std::vector<double>& scores, const std::vector<TermCount>& column,
                                        const DocKey& key) {
  std::uint64_t n = 0;
  for (const auto& e : column) {
    if (!std::isnan(scores[e.word])) n += e.count;
  }
  if (n == 0) return std::nullopt;

  const double total = static_cast<double>(n);
  VirginScore v;
  v.key = key;
  v.n_tokens = n;
  double first = kNaN;
  bool single_score = true;
  for (const auto& e : column) {
    const double s = scores[e.word];
    if (std::isnan(s)) continue;
    v.raw += static_cast<double>(e.count) / total * s;
    if (std::isnan(first)) first = s;
    single_score = single_score && s == first;
  }
  if (single_score) {
    // Exact: the weighted average of one value is that value.
    v.raw = first;
    v.rescaled = v.ci_low = v.ci_high = kNaN;
    return v;
  }
  for (const auto& e : column) {
    if (std::isnan(scores[e.word])) continue;
    const double d = scores[e.word] - v.raw;
    v.variance += static_cast<double>(e.count) / total * d * d;
  }
  v.std_error = std::sqrt(v.variance) / std::sqrt(total);
  v.rescaled = kNaN;
  v.ci_low = kNaN;
  v.ci_high = kNaN;
  return v;
}

}  // namespace

std::optional<double> WordscoresModel::score(const std::string& word) const {
  auto it = index.find(word);
  if (it == index.end() || std::isnan(word_scores[it->second])) return std::nullopt;
  return word_scores[it->second];
}

std::size_t WordscoresModel::scored_words() const {
  return static_cast<std::size_t>(
      std::count_if(word_scores.begin(), word_scores.end(), [](double s) { return !std::isnan(s); }));
}

double population_sd(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

WordscoresModel fit_wordscores(const SparseTermMatrix& matrix, const TrainingSet& training) {
  if (training.keys.size() != training.scores.size())
    throw std::invalid_argument("wordscores: one score per training key is required");
  if (training.size() < 2) throw std::invalid_argument("wordscores: at least 2 training documents are required");
  for (double s : training.scores)
    if (!std::isfinite(s)) throw std::invalid_argument("wordscores: non-finite training score");

  WordscoresModel model;
  model.sigma_t = population_sd(training.scores);
  if (!(model.sigma_t > 0.0))
    throw std::invalid_argument("wordscores: training scores have zero spread (sigma_t = 0)");
  model.min_score = *std::min_element(training.scores.begin(), training.scores.end());
  model.max_score = *std::max_element(training.scores.begin(), training.scores.end());
  model.training_keys = training.keys;
  model.words = matrix.vocab().words();
  model.index.reserve(model.words.size());
  for (std::size_t i = 0; i < model.words.size(); ++i) model.index.emplace(model.words[i], i);

  const std::size_t m = matrix.n_words();
  std::vector<double> freq_sum(m, 0.0);     // sum_t F_wt
  std::vector<double> weighted_sum(m, 0.0); // sum_t F_wt A_t
  for (std::size_t t = 0; t < training.size(); ++t) {
    const auto doc = matrix.doc_index(training.keys[t]);
    if (!doc) throw std::invalid_argument("wordscores: training document " + training.keys[t].str() + " not in corpus");
    const auto length = matrix.doc_length(*doc);
    if (length == 0) throw std::invalid_argument("wordscores: training document " + training.keys[t].str() + " has no tokens");
    for (const auto& e : matrix.column(*doc)) {
      const double f = static_cast<double>(e.count) / static_cast<double>(length);
      freq_sum[e.word] += f;
      weighted_sum[e.word] += f * training.scores[t];
    }
  }
  model.word_scores.assign(m, kNaN);
  for (std::size_t i = 0; i < m; ++i) {
    if (freq_sum[i] > 0.0) {
      model.word_scores[i] = std::clamp(weighted_sum[i] / freq_sum[i], model.min_score, model.max_score);
    }
  }
  return model;
}

std::optional<VirginScore> score_virgin(const WordscoresModel& model, const SparseTermMatrix& matrix,
                                        const DocKey& key) {
  const auto doc = matrix.doc_index(key);
  if (!doc) throw std::invalid_argument("wordscores: document " + key.str() + " not in corpus");
  return score_column(align_scores(model, matrix), matrix.column(*doc), key);
}

ScoringResult score_documents(const WordscoresModel& model, const SparseTermMatrix& matrix,
                              const std::vector<DocKey>& keys) {
  const auto scores = align_scores(model, matrix);
  ScoringResult out;
  for (const auto& key : keys) {
    const auto doc = matrix.doc_index(key);
    if (!doc) throw std::invalid_argument("wordscores: document " + key.str() + " not in corpus");
    if (auto v = score_column(scores, matrix.column(*doc), key)) {
      out.scores.push_back(*v);
    } else {
      out.unscorable.push_back(key);
    }
  }
  return out;
}

std::vector<VirginScore> rescale(std::vector<VirginScore> scores, const WordscoresModel& model) {
  if (scores.size() < 2) throw std::invalid_argument("rescale: at least 2 scorable virgin documents are required");
  std::vector<double> raw;
  raw.reserve(scores.size());
  for (const auto& s : scores) raw.push_back(s.raw);
  const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(raw.size());
  const double sigma_v = population_sd(raw);
  // Raw scores are rounded weighted means; a spread at rounding level is
  // noise, and dividing by it would amplify that noise without bound.
  double scale = 0.0;
  for (double r : raw) scale = std::max(scale, std::abs(r));
  if (!(sigma_v > 1e-12 * scale))
    throw std::invalid_argument("rescale: virgin scores have zero spread (sigma_v = 0 up to rounding)");

  const double factor = model.sigma_t / sigma_v;
  for (auto& s : scores) {
    s.rescaled = factor == 1.0 ? s.raw : (s.raw - mean) * factor + mean;
    s.std_error *= factor;
    s.ci_low = s.rescaled - kZ95 * s.std_error;
    s.ci_high = s.rescaled + kZ95 * s.std_error;
    s.is_rescaled = true;
  }
  return scores;
}

}  // namespace textscale::wordscores
