#include "textscale/trees.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

namespace textscale::trees {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPerfectBeta = 1e-12;
// Epsilon this close to 0.5 is 0.5 up to rounding (for example leaf means of
// 1/3); such a tree would carry ln(1/beta) ~ 0 median weight.
constexpr double kEpsilonTie = 1e-12;

struct SplitChoice {
  double cost = kInf;
  std::size_t feature = 0;
  double threshold = 0.0;
};

double weight_of(std::span<const double> weights, std::size_t i) { return weights.empty() ? 1.0 : weights[i]; }

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, std::size_t min_split, FeatureSubset c_mode, bool randomized, Rng& rng,
              std::span<const double> weights)
      : data_(data), min_split_(min_split), c_mode_(c_mode), randomized_(randomized), rng_(rng), weights_(weights) {}

  Tree build() {
    std::vector<std::size_t> rows(data_.n_samples());
    std::iota(rows.begin(), rows.end(), 0);
    grow(rows);
    return std::move(tree_);
  }

 private:
  std::size_t grow(std::vector<std::size_t>& rows) {
    const std::size_t index = tree_.nodes.size();
    tree_.nodes.emplace_back();

    double wsum = 0.0, wy = 0.0;
    for (auto i : rows) {
      wsum += weight_of(weights_, i);
      wy += weight_of(weights_, i) * data_.y(i);
    }
    TreeNode node;
    node.count = rows.size();
    node.prediction = wy / wsum;

    const bool pure = std::all_of(rows.begin(), rows.end(), [&](std::size_t i) { return data_.y(i) == data_.y(rows[0]); });
    if (rows.size() < min_split_ || pure) {
      tree_.nodes[index] = node;
      return index;
    }

    const SplitChoice best = randomized_ ? random_split(rows) : best_split(rows);
    if (!std::isfinite(best.cost)) {
      tree_.nodes[index] = node;
      return index;
    }

    std::vector<std::size_t> left, right;
    for (auto i : rows) (data_.x(i, best.feature) <= best.threshold ? left : right).push_back(i);
    rows.clear();
    rows.shrink_to_fit();

    node.leaf = false;
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = grow(left);
    node.right = grow(right);
    tree_.nodes[index] = node;
    return index;
  }

  std::vector<std::size_t> draw_features() {
    const std::size_t total = data_.n_features();
    std::vector<std::size_t> features(total);
    std::iota(features.begin(), features.end(), 0);
    const std::size_t c = candidate_count(c_mode_, total);
    if (c >= total) return features;
    for (std::size_t i = 0; i < c; ++i) std::swap(features[i], features[i + rng_.below(total - i)]);
    features.resize(c);
    return features;
  }

  // Exhaustive scan over midpoints between consecutive distinct values.
  SplitChoice best_split(const std::vector<std::size_t>& rows) {
    SplitChoice best;
    // Targets are centered on the node mean to limit cancellation in the
    // running sums.
    double wsum = 0.0, wy = 0.0;
    for (auto i : rows) {
      wsum += weight_of(weights_, i);
      wy += weight_of(weights_, i) * data_.y(i);
    }
    const double mean = wy / wsum;

    std::vector<std::size_t> order(rows);
    for (auto j : draw_features()) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double xa = data_.x(a, j), xb = data_.x(b, j);
        return xa < xb || (xa == xb && a < b);
      });
      double tw = 0.0, ty = 0.0, tyy = 0.0;
      for (auto i : order) {
        const double w = weight_of(weights_, i), d = data_.y(i) - mean;
        tw += w;
        ty += w * d;
        tyy += w * d * d;
      }
      double lw = 0.0, ly = 0.0, lyy = 0.0;
      for (std::size_t p = 0; p + 1 < order.size(); ++p) {
        const auto i = order[p];
        const double w = weight_of(weights_, i), d = data_.y(i) - mean;
        lw += w;
        ly += w * d;
        lyy += w * d * d;
        const double a = data_.x(i, j), b = data_.x(order[p + 1], j);
        if (a == b) continue;
        const double rw = tw - lw, ry = ty - ly, ryy = tyy - lyy;
        const double left_mse = std::max(0.0, lyy - ly * ly / lw) / lw;
        const double right_mse = std::max(0.0, ryy - ry * ry / rw) / rw;
        const double cost = left_mse + right_mse;
        if (cost < best.cost) {
          double s = a + (b - a) / 2.0;
          if (!(s < b)) s = a;
          best = {cost, j, s};
        }
      }
    }
    return best;
  }

  // One uniform threshold per candidate feature between the node's min and max.
  SplitChoice random_split(const std::vector<std::size_t>& rows) {
    SplitChoice best;
    for (auto j : draw_features()) {
      double lo = kInf, hi = -kInf;
      for (auto i : rows) {
        lo = std::min(lo, data_.x(i, j));
        hi = std::max(hi, data_.x(i, j));
      }
      if (!(lo < hi)) continue;
      double s = rng_.uniform(lo, hi);
      if (!(s < hi)) s = lo;
      const double cost = split_cost(data_, rows, weights_, j, s);
      if (cost < best.cost) best = {cost, j, s};
    }
    return best;
  }

  const Dataset& data_;
  std::size_t min_split_;
  FeatureSubset c_mode_;
  bool randomized_;
  Rng& rng_;
  std::span<const double> weights_;
  Tree tree_;
};

}  // namespace

Dataset::Dataset(std::size_t n_features, std::vector<double> x, std::vector<double> y)
    : n_features_(n_features), x_(std::move(x)), y_(std::move(y)) {
  if (x_.size() != n_features_ * y_.size()) throw std::invalid_argument("dataset: X size does not match n_samples * n_features");
  for (double v : x_)
    if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite feature value");
  for (double v : y_)
    if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite target");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<double> x;
  std::vector<double> y;
  x.reserve(rows.size() * n_features_);
  y.reserve(rows.size());
  for (auto i : rows) {
    auto r = row(i);
    x.insert(x.end(), r.begin(), r.end());
    y.push_back(y_.at(i));
  }
  return Dataset(n_features_, std::move(x), std::move(y));
}

void EnsembleConfig::validate() const {
  if (n_trees < 1) throw std::invalid_argument("ensemble: N must be >= 1");
  if (min_split < 1) throw std::invalid_argument("ensemble: l must be >= 1");
}

AdaBoostFailed::AdaBoostFailed(double epsilon)
    : std::runtime_error("adaboost failed: first tree has weighted error " + std::to_string(epsilon) + " >= 0.5"),
      epsilon_(epsilon) {}

std::size_t candidate_count(FeatureSubset mode, std::size_t n_features) {
  if (n_features == 0) return 0;
  std::size_t c = n_features;
  switch (mode) {
    case FeatureSubset::x_over_3: c = (n_features + 2) / 3; break;
    case FeatureSubset::sqrt_x: c = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_features)))); break;
    case FeatureSubset::all_x: break;
  }
  return std::clamp<std::size_t>(c, 1, n_features);
}

double split_cost(const Dataset& data, std::span<const std::size_t> rows, std::span<const double> weights,
                  std::size_t feature, double threshold) {
  double lw = 0.0, ly = 0.0, rw = 0.0, ry = 0.0;
  for (auto i : rows) {
    const double w = weight_of(weights, i);
    if (data.x(i, feature) <= threshold) {
      lw += w;
      ly += w * data.y(i);
    } else {
      rw += w;
      ry += w * data.y(i);
    }
  }
  if (lw <= 0.0 || rw <= 0.0) return kInf;
  const double lmean = ly / lw, rmean = ry / rw;
  double lsse = 0.0, rsse = 0.0;
  for (auto i : rows) {
    const double w = weight_of(weights, i);
    if (data.x(i, feature) <= threshold) {
      lsse += w * (data.y(i) - lmean) * (data.y(i) - lmean);
    } else {
      rsse += w * (data.y(i) - rmean) * (data.y(i) - rmean);
    }
  }
  return lsse / lw + rsse / rw;
}

Tree fit_tree(const Dataset& data, std::size_t min_split, FeatureSubset c_mode, bool randomized_threshold, Rng& rng,
              std::span<const double> weights) {
  if (data.n_samples() == 0) throw std::invalid_argument("fit_tree: empty dataset");
  if (!weights.empty() && weights.size() != data.n_samples())
    throw std::invalid_argument("fit_tree: one weight per sample is required");
  return TreeBuilder(data, min_split, c_mode, randomized_threshold, rng, weights).build();
}

double predict_tree(const Tree& tree, std::span<const double> row) {
  std::size_t i = 0;
  while (!tree.nodes[i].leaf) {
    const auto& node = tree.nodes[i];
    i = row[node.feature] <= node.threshold ? node.left : node.right;
  }
  return tree.nodes[i].prediction;
}

std::vector<std::size_t> bootstrap_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.below(n);
  return idx;
}

std::uint64_t tree_seed(std::uint64_t master, std::size_t t) { return mix_seed(master, t); }

EnsembleModel fit_forest(const Dataset& data, const EnsembleConfig& config, bool extreme) {
  config.validate();
  if (data.n_samples() == 0) throw std::invalid_argument("fit_forest: empty dataset");
  EnsembleModel model;
  model.config = config;
  model.config.method = extreme ? Method::extreme_forest : Method::random_forest;
  model.n_features = data.n_features();
  model.trees.resize(config.n_trees);

  auto grow = [&](std::size_t t) {
    Rng rng(tree_seed(config.seed, t));
    const auto idx = bootstrap_indices(data.n_samples(), rng);
    model.trees[t] = fit_tree(data.subset(idx), config.min_split, config.c_mode, extreme, rng);
  };

  std::size_t threads = config.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : config.threads;
  threads = std::min(threads, config.n_trees);
  if (threads <= 1) {
    for (std::size_t t = 0; t < config.n_trees; ++t) grow(t);
    return model;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      try {
        for (std::size_t t = next++; t < config.n_trees; t = next++) grow(t);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
  return model;
}

double predict_forest(const EnsembleModel& model, std::span<const double> row) {
  double sum = 0.0;
  for (const auto& t : model.trees) sum += predict_tree(t, row);
  return sum / static_cast<double>(model.trees.size());
}

EnsembleModel fit_adaboost_r2(const Dataset& data, const EnsembleConfig& config) {
  config.validate();
  const std::size_t n = data.n_samples();
  if (n == 0) throw std::invalid_argument("fit_adaboost_r2: empty dataset");

  EnsembleModel model;
  model.config = config;
  model.config.method = Method::adaboost_r2;
  model.n_features = data.n_features();

  Rng rng(config.seed);
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  std::vector<double> err(n);
  for (std::size_t t = 0; t < config.n_trees; ++t) {
    Tree tree = fit_tree(data, config.min_split, config.c_mode, false, rng, w);
    BoostRound round;
    round.weights = w;

    double max_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      err[i] = std::abs(data.y(i) - predict_tree(tree, data.row(i)));
      max_err = std::max(max_err, err[i]);
    }
    round.max_error = max_err;

    if (max_err == 0.0) {
      // Perfect fit: keep the tree with a large fixed weight and stop.
      round.beta = kPerfectBeta;
      round.retained = true;
      model.trees.push_back(std::move(tree));
      model.boost_betas.push_back(kPerfectBeta);
      model.boost_trace.push_back(std::move(round));
      break;
    }

    // One division at the end keeps epsilon exact when the weighted absolute
    // errors are.
    double weighted = 0.0;
    for (std::size_t i = 0; i < n; ++i) weighted += w[i] * err[i];
    const double epsilon = weighted / max_err;
    round.epsilon = epsilon;
    if (epsilon >= 0.5 - kEpsilonTie) {
      if (t == 0) throw AdaBoostFailed(epsilon);
      model.boost_trace.push_back(std::move(round));
      break;
    }

    const double beta = epsilon / (1.0 - epsilon);
    round.beta = beta;
    round.retained = true;
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] *= std::pow(beta, 1.0 - err[i] / max_err);
      z += w[i];
    }
    for (auto& v : w) v /= z;

    model.trees.push_back(std::move(tree));
    model.boost_betas.push_back(beta);
    model.boost_trace.push_back(std::move(round));
  }
  return model;
}

double weighted_median(std::span<const double> values, std::span<const double> weights) {
  if (values.empty()) throw std::invalid_argument("weighted_median: empty input");
  if (values.size() != weights.size()) throw std::invalid_argument("weighted_median: length mismatch");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw std::invalid_argument("weighted_median: weights must be positive");
    total += w;
  }
  double cum = 0.0;
  for (auto i : order) {
    cum += weights[i];
    if (cum >= 0.5 * total) return values[i];
  }
  return values[order.back()];
}

double predict_adaboost(const EnsembleModel& model, std::span<const double> row) {
  std::vector<double> preds, weights;
  preds.reserve(model.trees.size());
  weights.reserve(model.trees.size());
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    preds.push_back(predict_tree(model.trees[t], row));
    weights.push_back(std::log(1.0 / model.boost_betas[t]));
  }
  return weighted_median(preds, weights);
}

EnsembleModel fit_ensemble(const Dataset& data, const EnsembleConfig& config) {
  switch (config.method) {
    case Method::single_tree: {
      config.validate();
      EnsembleModel model;
      model.config = config;
      model.n_features = data.n_features();
      Rng rng(config.seed);
      model.trees.push_back(fit_tree(data, config.min_split, config.c_mode, false, rng));
      return model;
    }
    case Method::random_forest: return fit_forest(data, config, false);
    case Method::extreme_forest: return fit_forest(data, config, true);
    case Method::adaboost_r2: return fit_adaboost_r2(data, config);
  }
  throw std::invalid_argument("unknown ensemble method");
}

double predict(const EnsembleModel& model, std::span<const double> row) {
  if (row.size() != model.n_features) throw std::invalid_argument("predict: feature count mismatch");
  switch (model.config.method) {
    case Method::single_tree: return predict_tree(model.trees.front(), row);
    case Method::random_forest:
    case Method::extreme_forest: return predict_forest(model, row);
    case Method::adaboost_r2: return predict_adaboost(model, row);
  }
  throw std::invalid_argument("unknown ensemble method");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::single_tree: return "tree";
    case Method::random_forest: return "rf";
    case Method::extreme_forest: return "erf";
    case Method::adaboost_r2: return "ada";
  }
  return "?";
}

std::string to_string(FeatureSubset c) {
  switch (c) {
    case FeatureSubset::x_over_3: return "x3";
    case FeatureSubset::sqrt_x: return "sqrt";
    case FeatureSubset::all_x: return "all";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "tree") return Method::single_tree;
  if (s == "rf") return Method::random_forest;
  if (s == "erf") return Method::extreme_forest;
  if (s == "ada") return Method::adaboost_r2;
  throw std::invalid_argument("unknown tree method '" + s + "' (expected tree|rf|erf|ada)");
}

FeatureSubset parse_feature_subset(const std::string& s) {
  if (s == "x3") return FeatureSubset::x_over_3;
  if (s == "sqrt") return FeatureSubset::sqrt_x;
  if (s == "all") return FeatureSubset::all_x;
  throw std::invalid_argument("unknown feature subset '" + s + "' (expected x3|sqrt|all)");
}

void write_model(std::ostream& out, const EnsembleModel& model) {
  const auto old_precision = out.precision(17);
  const auto& c = model.config;
  out << "ensemble " << to_string(c.method) << ' ' << c.n_trees << ' ' << to_string(c.c_mode) << ' ' << c.min_split
      << ' ' << c.seed << ' ' << model.n_features << ' ' << model.trees.size() << '\n';
  if (c.method == Method::adaboost_r2) {
    out << "betas";
    for (double b : model.boost_betas) out << ' ' << b;
    out << '\n';
  }
  for (const auto& tree : model.trees) {
    out << "tree " << tree.nodes.size() << '\n';
    for (const auto& node : tree.nodes) {
      if (node.leaf) {
        out << "L " << node.prediction << ' ' << node.count << '\n';
      } else {
        out << "S " << node.feature << ' ' << node.threshold << ' ' << node.count << ' ' << node.prediction << '\n';
      }
    }
  }
  out.precision(old_precision);
}

namespace {

// Rebuilds child links from a pre-order listing.
std::size_t link_preorder(Tree& tree, std::size_t i) {
  if (i >= tree.nodes.size()) throw std::runtime_error("tree model: truncated pre-order listing");
  auto& node = tree.nodes[i];
  if (node.leaf) return i + 1;
  node.left = i + 1;
  const std::size_t after_left = link_preorder(tree, node.left);
  tree.nodes[i].right = after_left;
  return link_preorder(tree, after_left);
}

}  // namespace

EnsembleModel read_model(std::istream& in) {
  std::string tag, method, c_mode;
  std::size_t tree_count = 0;
  EnsembleModel model;
  auto& c = model.config;
  if (!(in >> tag >> method >> c.n_trees >> c_mode >> c.min_split >> c.seed >> model.n_features >> tree_count) ||
      tag != "ensemble")
    throw std::runtime_error("tree model: bad header");
  c.method = parse_method(method);
  c.c_mode = parse_feature_subset(c_mode);
  if (c.method == Method::adaboost_r2) {
    if (!(in >> tag) || tag != "betas") throw std::runtime_error("tree model: expected betas");
    model.boost_betas.resize(tree_count);
    for (auto& b : model.boost_betas)
      if (!(in >> b)) throw std::runtime_error("tree model: truncated betas");
  }
  model.trees.resize(tree_count);
  for (auto& tree : model.trees) {
    std::size_t count = 0;
    if (!(in >> tag >> count) || tag != "tree") throw std::runtime_error("tree model: expected tree");
    tree.nodes.resize(count);
    for (auto& node : tree.nodes) {
      std::string kind;
      if (!(in >> kind)) throw std::runtime_error("tree model: truncated nodes");
      if (kind == "L") {
        node.leaf = true;
        in >> node.prediction >> node.count;
      } else if (kind == "S") {
        node.leaf = false;
        in >> node.feature >> node.threshold >> node.count >> node.prediction;
      } else {
        throw std::runtime_error("tree model: bad node kind '" + kind + "'");
      }
      if (!in) throw std::runtime_error("tree model: truncated nodes");
    }
    if (link_preorder(tree, 0) != tree.nodes.size()) throw std::runtime_error("tree model: inconsistent pre-order");
  }
  return model;
}

void save_model(const std::filesystem::path& file, const EnsembleModel& model) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  write_model(out, model);
}

EnsembleModel load_model(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  return read_model(in);
}

}  // namespace textscale::trees
