#include "textscale/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "textscale/lsa.hpp"
#include "textscale/wordscores.hpp"

namespace textscale::pipeline {

namespace {

std::string variant_name(CorpusVariant v) { return v == CorpusVariant::A ? "A" : "B"; }

CorpusVariant parse_variant(const std::string& s) {
  if (s == "A" || s == "a") return CorpusVariant::A;
  if (s == "B" || s == "b") return CorpusVariant::B;
  throw std::invalid_argument("unknown corpus variant '" + s + "' (expected A|B)");
}

std::string alpha_name(lda::AlphaMode m) { return m == lda::AlphaMode::symmetric ? "sym" : "asym"; }

lda::AlphaMode parse_alpha(const std::string& s) {
  if (s == "sym" || s == "symmetric") return lda::AlphaMode::symmetric;
  if (s == "asym" || s == "asymmetric" || s == "asymmetric_normalized") return lda::AlphaMode::asymmetric_normalized;
  throw std::invalid_argument("unknown alpha mode '" + s + "' (expected sym|asym)");
}

}  // namespace

std::string to_string(Approach a) {
  switch (a) {
    case Approach::wordscores: return "wordscores";
    case Approach::lsa_trees: return "lsa";
    case Approach::lda_trees: return "lda";
  }
  return "?";
}

Approach parse_approach(const std::string& s) {
  if (s == "wordscores" || s == "ws") return Approach::wordscores;
  if (s == "lsa" || s == "lsa_trees") return Approach::lsa_trees;
  if (s == "lda" || s == "lda_trees") return Approach::lda_trees;
  throw std::invalid_argument("unknown approach '" + s + "' (expected wordscores|lsa|lda)");
}

std::string BatchSpec::label() const {
  std::string out = to_string(approach) + "/" + variant_name(variant);
  if (approach == Approach::wordscores) return out;
  out += "/k" + std::to_string(k);
  if (approach == Approach::lda_trees) out += "/" + alpha_name(alpha_mode);
  out += "/" + trees::to_string(tree_method) + "/" + trees::to_string(c_mode) + "/l" + std::to_string(min_split) +
         "/N" + std::to_string(n_trees) + "/s" + std::to_string(seed);
  return out;
}

void BatchSpec::validate() const {
  if (approach == Approach::wordscores) return;
  if (k < 1) throw std::invalid_argument("batch spec: k must be >= 1");
  if (n_trees < 1) throw std::invalid_argument("batch spec: n_trees must be >= 1");
  if (min_split < 1) throw std::invalid_argument("batch spec: l must be >= 1");
  if (approach == Approach::lda_trees && lda_passes < 1) throw std::invalid_argument("batch spec: passes must be >= 1");
}

nlohmann::json to_json(const BatchSpec& s) {
  nlohmann::json j{{"approach", to_string(s.approach)}, {"variant", variant_name(s.variant)}, {"seed", s.seed}};
  if (s.approach != Approach::wordscores) {
    j["k"] = s.k;
    j["method"] = trees::to_string(s.tree_method);
    j["c"] = trees::to_string(s.c_mode);
    j["l"] = s.min_split;
    j["n"] = s.n_trees;
  }
  if (s.approach == Approach::lda_trees) {
    j["alpha"] = alpha_name(s.alpha_mode);
    j["passes"] = s.lda_passes;
  }
  return j;
}

BatchSpec batch_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("batch spec must be a JSON object");
  BatchSpec s;
  try {
    if (j.contains("approach")) s.approach = parse_approach(j.at("approach").get<std::string>());
    if (j.contains("variant")) s.variant = parse_variant(j.at("variant").get<std::string>());
    if (j.contains("k")) s.k = j.at("k").get<std::size_t>();
    if (j.contains("method")) s.tree_method = trees::parse_method(j.at("method").get<std::string>());
    if (j.contains("c")) s.c_mode = trees::parse_feature_subset(j.at("c").get<std::string>());
    if (j.contains("l")) s.min_split = j.at("l").get<std::size_t>();
    if (j.contains("n")) s.n_trees = j.at("n").get<std::size_t>();
    if (j.contains("alpha")) s.alpha_mode = parse_alpha(j.at("alpha").get<std::string>());
    if (j.contains("passes")) s.lda_passes = j.at("passes").get<std::size_t>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("batch spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<BatchSpec> batch_specs_from_json(const nlohmann::json& j) {
  const auto& list = j.is_object() && j.contains("batches") ? j.at("batches") : j;
  if (!list.is_array()) throw std::invalid_argument("grid spec must be a JSON array of batch specs");
  std::vector<BatchSpec> out;
  for (const auto& item : list) out.push_back(batch_spec_from_json(item));
  return out;
}

BatchRunner::BatchRunner(CorpusInputs inputs) : inputs_(std::move(inputs)) {}

const SparseTermMatrix& BatchRunner::matrix(CorpusVariant v) {
  if (v == CorpusVariant::A) return inputs_.matrix;
  std::lock_guard lock(mutex_);
  if (!variant_b_) {
    CorpusVariantConfig cfg{CorpusVariant::B, inputs_.stoplist, inputs_.min_max_in_doc_count};
    variant_b_ = std::make_unique<SparseTermMatrix>(apply_variant(inputs_.matrix, cfg));
  }
  return *variant_b_;
}

const Eigen::MatrixXd& BatchRunner::topic_features(const BatchSpec& spec) {
  const auto& mat = matrix(spec.variant);
  const bool is_lda = spec.approach == Approach::lda_trees;
  const FeatureKey key{static_cast<int>(spec.variant), static_cast<int>(spec.approach), spec.k,
                       is_lda ? static_cast<int>(spec.alpha_mode) : 0, is_lda ? spec.lda_passes : 0, spec.seed};
  std::lock_guard lock(mutex_);
  if (auto it = features_.find(key); it != features_.end()) return *it->second;

  Eigen::MatrixXd features;
  if (spec.approach == Approach::lsa_trees) {
    const auto factors = lsa::fit_lsa(mat, spec.k, spec.seed);
    features = lsa::topic_doc_scores(factors).scores.transpose();
  } else {
    lda::LdaConfig cfg;
    cfg.k = spec.k;
    cfg.alpha_mode = spec.alpha_mode;
    cfg.passes = spec.lda_passes;
    cfg.seed = spec.seed;
    const auto model = lda::fit_lda(mat, cfg);
    features = lda::infer_theta(model, mat).theta;
  }
  auto stored = std::make_shared<const Eigen::MatrixXd>(std::move(features));
  return *features_.emplace(key, std::move(stored)).first->second;
}

eval::ScoreTable BatchRunner::run(const BatchSpec& spec, const eval::ScoreTable& training) {
  spec.validate();
  const auto& mat = matrix(spec.variant);

  std::vector<char> is_training(mat.n_docs(), 0);
  wordscores::TrainingSet ts;
  for (const auto& row : training.rows()) {
    if (auto j = mat.doc_index(row.key)) {
      is_training[*j] = 1;
      ts.keys.push_back(row.key);
      ts.scores.push_back(row.score);
    }
  }
  if (ts.size() < 2)
    throw std::invalid_argument("at least 2 training documents must be present in the corpus (found " +
                                std::to_string(ts.size()) + ")");
  std::vector<DocKey> virgin;
  for (std::size_t j = 0; j < mat.n_docs(); ++j) {
    if (!is_training[j]) virgin.push_back(mat.doc_key(j));
  }
  if (virgin.empty()) throw std::invalid_argument("no documents left to score outside the training set");

  if (spec.approach == Approach::wordscores) {
    const auto model = wordscores::fit_wordscores(mat, ts);
    auto scored = wordscores::score_documents(model, mat, virgin);
    return eval::from_virgin_scores(wordscores::rescale(std::move(scored.scores), model));
  }

  const Eigen::MatrixXd& features = topic_features(spec);
  const auto k = static_cast<std::size_t>(features.cols());
  std::vector<double> x;
  x.reserve(ts.size() * k);
  for (const auto& key : ts.keys) {
    const auto j = static_cast<Eigen::Index>(*mat.doc_index(key));
    for (std::size_t c = 0; c < k; ++c) x.push_back(features(j, static_cast<Eigen::Index>(c)));
  }
  trees::Dataset data(k, std::move(x), ts.scores);

  trees::EnsembleConfig cfg;
  cfg.method = spec.tree_method;
  cfg.n_trees = spec.n_trees;
  cfg.c_mode = spec.c_mode;
  cfg.min_split = spec.min_split;
  cfg.seed = spec.seed;
  const auto model = trees::fit_ensemble(data, cfg);

  eval::ScoreTable out;
  std::vector<double> row(k);
  for (const auto& key : virgin) {
    const auto j = static_cast<Eigen::Index>(*mat.doc_index(key));
    for (std::size_t c = 0; c < k; ++c) row[c] = features(j, static_cast<Eigen::Index>(c));
    out.add({key, trees::predict(model, row), std::nullopt, std::nullopt, std::nullopt});
  }
  return out;
}

GridSplit split_by_years(const eval::ScoreTable& reference, const std::set<int>& train_years) {
  GridSplit s;
  for (const auto& row : reference.rows()) (train_years.contains(row.key.year) ? s.training : s.test_reference).add(row);
  return s;
}

GridReport run_batch_grid(BatchRunner& runner, const std::vector<BatchSpec>& specs, const eval::ScoreTable& reference,
                          const std::set<int>& train_years, std::size_t threads) {
  const auto split = split_by_years(reference, train_years);
  GridReport report;
  report.rows.resize(specs.size());

  auto run_one = [&](std::size_t i) {
    auto& row = report.rows[i];
    row.spec = specs[i];
    try {
      const auto scores = runner.run(specs[i], split.training);
      std::size_t shared = 0;
      for (const auto& r : scores.rows()) shared += split.test_reference.find(r.key) ? 1 : 0;
      row.n = shared;
      row.correlation = eval::pearson(scores, split.test_reference);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  };

  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, specs.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < specs.size(); ++i) run_one(i);
    return report;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < specs.size(); i = next++) run_one(i);
      });
    }
  }
  return report;
}

void write_grid_report(std::ostream& out, const GridReport& report) {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  out << "label,approach,variant,k,method,c,l,alpha,seed,n,correlation,error\n";
  for (const auto& r : report.rows) {
    const auto& s = r.spec;
    const bool topic = s.approach != Approach::wordscores;
    out << s.label() << ',' << to_string(s.approach) << ',' << variant_name(s.variant) << ','
        << (topic ? std::to_string(s.k) : "") << ',' << (topic ? trees::to_string(s.tree_method) : "") << ','
        << (topic ? trees::to_string(s.c_mode) : "") << ',' << (topic ? std::to_string(s.min_split) : "") << ','
        << (s.approach == Approach::lda_trees ? alpha_name(s.alpha_mode) : "") << ',' << s.seed << ',' << r.n << ','
        << (r.error.empty() ? num(r.correlation) : "") << ',' << r.error << '\n';
  }

  // Method x k pivot for topic approaches (first matching batch per cell).
  std::set<std::size_t> ks;
  for (const auto& r : report.rows)
    if (r.spec.approach != Approach::wordscores) ks.insert(r.spec.k);
  if (ks.empty()) return;
  const trees::Method methods[] = {trees::Method::single_tree, trees::Method::random_forest,
                                   trees::Method::extreme_forest, trees::Method::adaboost_r2};
  out << "\n# correlations by topics and tree method\n";
  out << "k,approach,tree,rf,erf,ada\n";
  for (auto k : ks) {
    for (auto approach : {Approach::lsa_trees, Approach::lda_trees}) {
      std::string line = std::to_string(k) + "," + to_string(approach);
      bool any = false;
      for (auto m : methods) {
        std::string cell;
        for (const auto& r : report.rows) {
          if (r.spec.approach == approach && r.spec.k == k && r.spec.tree_method == m && r.error.empty()) {
            cell = num(r.correlation);
            any = true;
            break;
          }
        }
        line += "," + cell;
      }
      if (any) out << line << '\n';
    }
  }
}

}  // namespace textscale::pipeline
