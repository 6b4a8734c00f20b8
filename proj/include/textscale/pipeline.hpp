#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "textscale/corpus.hpp"
#include "textscale/eval.hpp"
#include "textscale/lda.hpp"
#include "textscale/trees.hpp"

namespace textscale::pipeline {

enum class Approach { wordscores, lsa_trees, lda_trees };

/// One scoring configuration. Tree and topic fields are ignored by wordscores.
struct BatchSpec {
  CorpusVariant variant = CorpusVariant::A;
  Approach approach = Approach::wordscores;
  std::size_t k = 50;
  trees::Method tree_method = trees::Method::random_forest;
  trees::FeatureSubset c_mode = trees::FeatureSubset::all_x;
  std::size_t min_split = 5;
  std::size_t n_trees = 10000;
  lda::AlphaMode alpha_mode = lda::AlphaMode::symmetric;
  std::size_t lda_passes = 10;
  std::uint64_t seed = 0;

  std::string label() const;
  void validate() const;
};

nlohmann::json to_json(const BatchSpec& spec);
/// Missing fields take the defaults above; unknown enum strings throw
/// std::invalid_argument.
BatchSpec batch_spec_from_json(const nlohmann::json& j);
std::vector<BatchSpec> batch_specs_from_json(const nlohmann::json& j);

std::string to_string(Approach a);
Approach parse_approach(const std::string& s);

/// Variant-A matrix plus what variant B needs.
struct CorpusInputs {
  SparseTermMatrix matrix;
  std::vector<std::string> stoplist;
  std::uint64_t min_max_in_doc_count = 2;
};

/// Runs batches against one corpus, caching topic features across batches
/// that share (variant, approach, k, alpha, passes, seed). Safe to call from
/// several threads.
class BatchRunner {
 public:
  explicit BatchRunner(CorpusInputs inputs);

  /// Scores every corpus document that is not in `training`. Training keys
  /// absent from the corpus are ignored; at least two must be present.
  /// Wordscores rows carry rescaled scores with standard errors and 95%
  /// intervals; unscorable documents are omitted.
  eval::ScoreTable run(const BatchSpec& spec, const eval::ScoreTable& training);

  const SparseTermMatrix& matrix(CorpusVariant v);

 private:
  using FeatureKey = std::tuple<int, int, std::size_t, int, std::size_t, std::uint64_t>;

  const Eigen::MatrixXd& topic_features(const BatchSpec& spec);

  CorpusInputs inputs_;
  std::mutex mutex_;
  std::unique_ptr<SparseTermMatrix> variant_b_;
  std::map<FeatureKey, std::shared_ptr<const Eigen::MatrixXd>> features_;
};

/// Splits a reference table by year into training rows and the test rows
/// used for correlation.
struct GridSplit {
  eval::ScoreTable training;
  eval::ScoreTable test_reference;
};
GridSplit split_by_years(const eval::ScoreTable& reference, const std::set<int>& train_years);

struct GridRow {
  BatchSpec spec;
  double correlation = 0.0;
  std::size_t n = 0;  // keys shared with the test reference
  std::string error;  // non-empty if the batch failed
};

struct GridReport {
  std::vector<GridRow> rows;  // in spec order
};

/// Runs every spec against the corpus, training on the reference rows from
/// `train_years` and correlating with the remaining reference rows.
GridReport run_batch_grid(BatchRunner& runner, const std::vector<BatchSpec>& specs, const eval::ScoreTable& reference,
                          const std::set<int>& train_years, std::size_t threads = 1);

/// Long CSV `label,approach,variant,k,method,c,l,alpha,seed,n,correlation`
/// followed by a method x k pivot per topic approach.
void write_grid_report(std::ostream& out, const GridReport& report);

}  // namespace textscale::pipeline
