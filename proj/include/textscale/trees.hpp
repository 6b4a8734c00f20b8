#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "textscale/rng.hpp"

namespace textscale::trees {

/// Row-major feature matrix with targets.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t n_features, std::vector<double> x, std::vector<double> y);

  std::size_t n_samples() const { return y_.size(); }
  std::size_t n_features() const { return n_features_; }
  std::span<const double> row(std::size_t i) const { return {x_.data() + i * n_features_, n_features_}; }
  double x(std::size_t i, std::size_t j) const { return x_[i * n_features_ + j]; }
  double y(std::size_t i) const { return y_[i]; }
  const std::vector<double>& targets() const { return y_; }

  /// Rows in the given order, duplicates allowed.
  Dataset subset(std::span<const std::size_t> rows) const;

 private:
  std::size_t n_features_ = 0;
  std::vector<double> x_;
  std::vector<double> y_;
};

/// Flat pre-order tree. Internal nodes route x[feature] <= threshold left.
struct TreeNode {
  bool leaf = true;
  std::size_t feature = 0;
  double threshold = 0.0;
  std::size_t left = 0;   // node index
  std::size_t right = 0;  // node index
  double prediction = 0.0;
  std::size_t count = 0;  // training samples that reached the node

  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  bool operator==(const Tree&) const = default;
};

enum class Method { single_tree, random_forest, extreme_forest, adaboost_r2 };
enum class FeatureSubset { x_over_3, sqrt_x, all_x };

struct EnsembleConfig {
  Method method = Method::random_forest;
  std::size_t n_trees = 10000;
  FeatureSubset c_mode = FeatureSubset::all_x;
  std::size_t min_split = 2;  // nodes with fewer samples become leaves
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // forest fitting; 0 means hardware concurrency

  void validate() const;
};

/// One AdaBoost.R2 round, recorded for every fitted (retained or rejected) tree.
struct BoostRound {
  std::vector<double> weights;  // sample weights the tree was fitted with
  double max_error = 0.0;       // D_t
  double epsilon = 0.0;         // weighted mean relative error
  double beta = 0.0;            // epsilon / (1 - epsilon); 0 if rejected
  bool retained = false;
};

struct EnsembleModel {
  EnsembleConfig config;
  std::size_t n_features = 0;
  std::vector<Tree> trees;
  std::vector<double> boost_betas;  // one per retained tree (AdaBoost only)
  std::vector<BoostRound> boost_trace;

  bool operator==(const EnsembleModel& other) const {
    return trees == other.trees && boost_betas == other.boost_betas && n_features == other.n_features;
  }
};

class AdaBoostFailed : public std::runtime_error {
 public:
  explicit AdaBoostFailed(double epsilon);
  double epsilon() const { return epsilon_; }

 private:
  double epsilon_;
};

/// Number of candidate features per node: ceil(x/3), ceil(sqrt(x)) or x,
/// never below 1.
std::size_t candidate_count(FeatureSubset mode, std::size_t n_features);

/// Sum of the two children's (weighted) mean squared errors for a split of
/// `rows` at x[feature] <= threshold. Either side empty gives +infinity.
double split_cost(const Dataset& data, std::span<const std::size_t> rows, std::span<const double> weights,
                  std::size_t feature, double threshold);

/// Grows a regression tree. A node becomes a leaf when it holds fewer than
/// min_split samples, its targets are constant, or no candidate feature can
/// be split. Candidate features are redrawn at every node. If `weights` is
/// empty all samples weigh the same.
Tree fit_tree(const Dataset& data, std::size_t min_split, FeatureSubset c_mode, bool randomized_threshold,
              Rng& rng, std::span<const double> weights = {});

double predict_tree(const Tree& tree, std::span<const double> row);

/// n draws with replacement from [0, n).
std::vector<std::size_t> bootstrap_indices(std::size_t n, Rng& rng);

/// Seed of the t-th forest tree. The tree's rng first draws its bootstrap
/// sample, then grows the tree on it.
std::uint64_t tree_seed(std::uint64_t master, std::size_t t);

EnsembleModel fit_forest(const Dataset& data, const EnsembleConfig& config, bool extreme);
double predict_forest(const EnsembleModel& model, std::span<const double> row);

/// Throws AdaBoostFailed if the first tree already has epsilon >= 0.5. Epsilon
/// within 1e-12 of 0.5 counts as 0.5, as it only differs by rounding.
EnsembleModel fit_adaboost_r2(const Dataset& data, const EnsembleConfig& config);
double predict_adaboost(const EnsembleModel& model, std::span<const double> row);

/// Smallest value whose cumulative weight reaches half the total weight.
double weighted_median(std::span<const double> values, std::span<const double> weights);

/// Dispatches on config.method.
EnsembleModel fit_ensemble(const Dataset& data, const EnsembleConfig& config);
double predict(const EnsembleModel& model, std::span<const double> row);

std::string to_string(Method m);
std::string to_string(FeatureSubset c);
Method parse_method(const std::string& s);
FeatureSubset parse_feature_subset(const std::string& s);

// Text format:
//   ensemble <method> <n_trees> <c_mode> <min_split> <seed> <n_features> <tree count>
//   betas <b1> ... (AdaBoost only)
//   tree <node count>, then one pre-order line per node:
//     S <feature> <threshold> <count> <node mean>  or  L <prediction> <count>
void write_model(std::ostream& out, const EnsembleModel& model);
EnsembleModel read_model(std::istream& in);
void save_model(const std::filesystem::path& file, const EnsembleModel& model);
EnsembleModel load_model(const std::filesystem::path& file);

}  // namespace textscale::trees
