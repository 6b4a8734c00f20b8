#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "textscale/corpus.hpp"
#include "textscale/wordscores.hpp"

namespace textscale::eval {

struct ScoreRow {
  DocKey key;
  double score = 0.0;
  std::optional<double> std_error;
  std::optional<double> ci_low;
  std::optional<double> ci_high;

  bool operator==(const ScoreRow&) const = default;
};

/// Scores keyed by document; keys are unique and rows kept sorted by key.
class ScoreTable {
 public:
  ScoreTable() = default;
  explicit ScoreTable(std::vector<ScoreRow> rows);

  void add(ScoreRow row);
  const std::vector<ScoreRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  const ScoreRow* find(const DocKey& key) const;

  bool operator==(const ScoreTable& other) const { return rows_ == other.rows_; }

 private:
  std::vector<ScoreRow> rows_;
};

ScoreTable from_virgin_scores(const std::vector<wordscores::VirginScore>& scores);

/// CSV with header `entity,year,score[,std_error,ci_low,ci_high]`. Reading
/// also accepts the wordscores output layout (uses the `rescaled` column) and
/// plain `entity,year,score` training tables.
void write_table_csv(std::ostream& out, const ScoreTable& table);
ScoreTable read_table_csv(std::istream& in);
ScoreTable load_table_csv(const std::filesystem::path& file);
void save_table_csv(const std::filesystem::path& file, const ScoreTable& table);

/// `entity,year,raw,rescaled,std_error,ci_low,ci_high,n_tokens`.
void write_wordscores_csv(std::ostream& out, const std::vector<wordscores::VirginScore>& scores);

/// Pearson r over the shared keys. Throws std::invalid_argument with fewer
/// than two shared keys or zero variance.
double pearson(const ScoreTable& a, const ScoreTable& b);
double pearson(const std::vector<double>& a, const std::vector<double>& b);

/// Spearman rank correlation (average ranks for ties).
double spearman(const std::vector<double>& a, const std::vector<double>& b);
double spearman(const ScoreTable& a, const ScoreTable& b);

struct YearSummary {
  std::optional<int> year;  // nullopt for the "all" row
  std::size_t n = 0;
  double mean = 0.0;
  double std_dev = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
};

/// One row per year in ascending order, then the "all" row.
std::vector<YearSummary> summary_by_year(const ScoreTable& table);

struct Discrepancy {
  DocKey key;
  double a = 0.0;
  double b = 0.0;
  double delta = 0.0;  // a - b
};

struct DiscrepancyReport {
  std::vector<Discrepancy> largest_positive;  // delta descending
  std::vector<Discrepancy> largest_negative;  // delta ascending
};

/// Ties are ordered by key.
DiscrepancyReport discrepancies(const ScoreTable& a, const ScoreTable& b, std::size_t top);

struct OverlapStats {
  std::vector<std::pair<DocKey, std::size_t>> counts;
  double mean = 0.0;
};

/// Number of other rows whose closed confidence interval intersects each row's.
/// Throws std::invalid_argument if any row lacks an interval or has
/// ci_low > ci_high.
OverlapStats ci_overlap_stats(const ScoreTable& table);

struct GroupStats {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 1;
};

struct MeansTest {
  double z = 0.0;
  double p = 1.0;            // two-sided normal
  double p_one_sided = 0.5;  // tail in the direction of the observed difference
};

/// z = (mean1 - mean2) / sqrt(se1^2 + se2^2). Throws std::invalid_argument if
/// the denominator is zero.
MeansTest diff_of_means(const GroupStats& g1, const GroupStats& g2);

/// Standard normal upper tail P(Z > z).
double normal_upper_tail(double z);

struct RangeSize {
  DocKey key;
  double size = 0.0;
  double range = 0.0;  // ci_high - ci_low
};

/// Pairs each interval width with the document size (bytes or tokens).
std::vector<RangeSize> range_vs_size(const ScoreTable& table, const std::map<DocKey, double>& sizes);

}  // namespace textscale::eval
