// textscale: command-line front end for ingestion, topic models, tree
// ensembles, wordscores, evaluation and the HTTP service.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "textscale/corpus.hpp"
#include "textscale/eval.hpp"
#include "textscale/lda.hpp"
#include "textscale/lsa.hpp"
#include "textscale/pipeline.hpp"
#include "textscale/service.hpp"
#include "textscale/trees.hpp"
#include "textscale/wordscores.hpp"

namespace {

using namespace textscale;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::set<int> parse_years(const std::string& s) {
  std::set<int> years;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (auto dash = item.find('-', 1); dash != std::string::npos) {
      const int lo = std::stoi(item.substr(0, dash)), hi = std::stoi(item.substr(dash + 1));
      for (int y = lo; y <= hi; ++y) years.insert(y);
    } else {
      years.insert(std::stoi(item));
    }
  }
  if (years.empty()) throw std::invalid_argument("no training years given");
  return years;
}

void write_features(const std::string& path, const std::vector<DocKey>& keys, const Eigen::MatrixXd& rows) {
  auto out = open_out(path);
  out.precision(17);
  out << "entity,year";
  for (Eigen::Index c = 0; c < rows.cols(); ++c) out << ",f" << c;
  out << '\n';
  for (std::size_t i = 0; i < keys.size(); ++i) {
    out << keys[i].entity << ',' << keys[i].year;
    for (Eigen::Index c = 0; c < rows.cols(); ++c) out << ',' << rows(static_cast<Eigen::Index>(i), c);
    out << '\n';
  }
}

struct FeatureTable {
  std::vector<DocKey> keys;
  std::vector<std::vector<double>> rows;
};

FeatureTable read_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  FeatureTable t;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    DocKey key;
    std::getline(ss, key.entity, ',');
    std::getline(ss, cell, ',');
    key.year = std::stoi(cell);
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!t.rows.empty() && row.size() != t.rows.front().size())
      throw std::runtime_error(path + ": ragged feature rows");
    t.keys.push_back(key);
    t.rows.push_back(std::move(row));
  }
  return t;
}

void print_summary(const std::vector<eval::YearSummary>& rows) {
  std::printf("year,n,mean,std_dev,min,max\n");
  for (const auto& r : rows) {
    std::printf("%s,%zu,%.7g,%.7g,%.7g,%.7g\n", r.year ? std::to_string(*r.year).c_str() : "all", r.n, r.mean,
                r.std_dev, r.min, r.max);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"textscale - supervised text scaling"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Build a term matrix from <entity>_<year>.txt files or JSON lines");
  std::string in_path, variant = "A", stoplist_path, out_path;
  std::uint64_t min_count = 2;
  ingest->add_option("--input", in_path, "Directory or .jsonl file")->required();
  ingest->add_option("--variant", variant, "Corpus variant")->check(CLI::IsMember({"A", "B"}));
  ingest->add_option("--stoplist", stoplist_path, "Stoplist file (variant B)");
  ingest->add_option("--min-count", min_count, "Variant B: minimum of a word's largest per-document count");
  ingest->add_option("--out", out_path, "Output matrix file")->required();

  // lsa
  auto* lsa_cmd = app.add_subcommand("lsa", "TF-IDF, normalization and randomized truncated SVD");
  std::string matrix_path, topics_out;
  std::size_t k = 50, oversample = 10, power_iters = 4, top = 0;
  std::uint64_t seed = 0;
  lsa_cmd->add_option("--matrix", matrix_path)->required();
  lsa_cmd->add_option("--k", k)->required();
  lsa_cmd->add_option("--seed", seed);
  lsa_cmd->add_option("--oversample", oversample);
  lsa_cmd->add_option("--power-iters", power_iters);
  lsa_cmd->add_option("--out", out_path, "Factor file")->required();
  lsa_cmd->add_option("--topics-out", topics_out, "CSV of topic scores per document (features for trees)");
  lsa_cmd->add_option("--top-words", top, "Print this many top words per topic");

  // lda
  auto* lda_cmd = app.add_subcommand("lda", "Online variational LDA");
  std::string alpha = "sym", theta_out;
  std::size_t passes = 10, batch_size = 256;
  lda_cmd->add_option("--matrix", matrix_path)->required();
  lda_cmd->add_option("--k", k)->required();
  lda_cmd->add_option("--alpha", alpha)->check(CLI::IsMember({"sym", "asym"}));
  lda_cmd->add_option("--seed", seed);
  lda_cmd->add_option("--passes", passes);
  lda_cmd->add_option("--batch-size", batch_size, "Documents per update, 0 = full corpus");
  lda_cmd->add_option("--out", out_path, "Model file")->required();
  lda_cmd->add_option("--theta-out", theta_out, "CSV of topic proportions per document");

  // trees
  auto* trees_cmd = app.add_subcommand("trees", "Fit a tree ensemble on document features");
  std::string features_path, scores_path, method = "rf", c_mode = "all", predict_out;
  std::size_t n_trees = 10000, min_split = 5, threads = 0;
  trees_cmd->add_option("--features", features_path, "CSV entity,year,f0,...")->required();
  trees_cmd->add_option("--scores", scores_path, "CSV entity,year,score (training rows)")->required();
  trees_cmd->add_option("--method", method)->check(CLI::IsMember({"tree", "rf", "erf", "ada"}));
  trees_cmd->add_option("--n", n_trees);
  trees_cmd->add_option("--c", c_mode)->check(CLI::IsMember({"x3", "sqrt", "all"}));
  trees_cmd->add_option("--l", min_split);
  trees_cmd->add_option("--seed", seed);
  trees_cmd->add_option("--threads", threads);
  trees_cmd->add_option("--out", out_path, "Model file")->required();
  trees_cmd->add_option("--predict-out", predict_out, "Score CSV for feature rows without a training score");

  // wordscores
  auto* ws_cmd = app.add_subcommand("wordscores", "Score virgin documents from reference scores");
  std::string train_scores, train_years;
  ws_cmd->add_option("--matrix", matrix_path)->required();
  ws_cmd->add_option("--train-scores", train_scores, "CSV entity,year,score")->required();
  ws_cmd->add_option("--train-years", train_years, "Comma list or ranges, e.g. 1992 or 1992,1994-1996")->required();
  ws_cmd->add_option("--out", out_path)->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluation utilities");
  eval_cmd->require_subcommand(1);
  std::string a_path, b_path;
  auto* corr = eval_cmd->add_subcommand("corr", "Pearson correlation over shared keys");
  corr->add_option("--a", a_path)->required();
  corr->add_option("--b", b_path)->required();
  auto* summary = eval_cmd->add_subcommand("summary", "Per-year summary statistics");
  summary->add_option("--scores", a_path)->required();
  auto* discrep = eval_cmd->add_subcommand("discrep", "Largest differences a - b");
  std::size_t top_n = 10;
  discrep->add_option("--a", a_path)->required();
  discrep->add_option("--b", b_path)->required();
  discrep->add_option("--top", top_n);
  auto* overlap = eval_cmd->add_subcommand("overlap", "Confidence-interval overlap counts");
  overlap->add_option("--scores", a_path)->required();
  auto* dmeans = eval_cmd->add_subcommand("dmeans", "Difference-of-means z test");
  double m1 = 0, se1 = 0, m2 = 0, se2 = 0;
  dmeans->add_option("--mean1", m1)->required();
  dmeans->add_option("--se1", se1)->required();
  dmeans->add_option("--mean2", m2)->required();
  dmeans->add_option("--se2", se2)->required();
  auto* grid = eval_cmd->add_subcommand("grid", "Run a batch grid and correlate with a reference table");
  std::string grid_spec;
  std::size_t grid_threads = 1;
  grid->add_option("--matrix", matrix_path)->required();
  grid->add_option("--stoplist", stoplist_path);
  grid->add_option("--reference", a_path, "Reference CSV entity,year,score")->required();
  grid->add_option("--train-years", train_years)->required();
  grid->add_option("--spec", grid_spec, "JSON array of batch specs")->required();
  grid->add_option("--threads", grid_threads);
  grid->add_option("--out", out_path, "Report CSV (stdout if omitted)");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  service::ServiceConfig svc;
  std::string data_dir = "textscale-data", static_dir, corpus_file;
  serve->add_option("--data", data_dir, "Data directory");
  serve->add_option("--host", svc.host);
  serve->add_option("--port", svc.port);
  serve->add_option("--workers", svc.workers);
  serve->add_option("--static", static_dir, "Serve web client files from this directory");
  serve->add_option("--corpus", corpus_file, "Register this matrix file at startup");
  serve->add_option("--stoplist", stoplist_path, "Stoplist for the registered corpus");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) {
      CorpusVariantConfig cfg;
      cfg.variant = variant == "B" ? CorpusVariant::B : CorpusVariant::A;
      cfg.min_max_in_doc_count = min_count;
      if (!stoplist_path.empty()) cfg.stoplist = load_stoplist(stoplist_path);
      const auto matrix = textscale::ingest(load_documents(in_path), cfg);
      save_matrix(out_path, matrix);
      std::fprintf(stderr, "%zu words x %zu documents, %zu non-zeros\n", matrix.n_words(), matrix.n_docs(), matrix.nnz());
    } else if (lsa_cmd->parsed()) {
      const auto matrix = load_matrix(matrix_path);
      const auto f = lsa::fit_lsa(matrix, k, seed, {oversample, power_iters});
      lsa::save_factors(out_path, f);
      if (!topics_out.empty()) write_features(topics_out, matrix.doc_keys(), lsa::topic_doc_scores(f).scores.transpose());
      for (std::size_t t = 0; top > 0 && t < f.k(); ++t) {
        std::printf("topic %zu:", t);
        for (const auto& [w, v] : lsa::top_words(f, matrix.vocab().words(), t, top)) std::printf(" %s(%.3f)", w.c_str(), v);
        std::printf("\n");
      }
    } else if (lda_cmd->parsed()) {
      const auto matrix = load_matrix(matrix_path);
      lda::LdaConfig cfg;
      cfg.k = k;
      cfg.alpha_mode = alpha == "asym" ? lda::AlphaMode::asymmetric_normalized : lda::AlphaMode::symmetric;
      cfg.seed = seed;
      cfg.passes = passes;
      cfg.batch_size = batch_size;
      const auto model = lda::fit_lda(matrix, cfg, [&](std::size_t pass, const lda::LdaModel&) {
        std::fprintf(stderr, "pass %zu/%zu\n", pass, passes);
      });
      lda::save_model(out_path, model);
      if (!theta_out.empty()) write_features(theta_out, matrix.doc_keys(), lda::infer_theta(model, matrix).theta);
    } else if (trees_cmd->parsed()) {
      const auto features = read_features(features_path);
      const auto scores = eval::load_table_csv(scores_path);
      std::vector<double> x, y;
      std::vector<std::size_t> unscored;
      const std::size_t width = features.rows.empty() ? 0 : features.rows.front().size();
      for (std::size_t i = 0; i < features.keys.size(); ++i) {
        if (const auto* row = scores.find(features.keys[i])) {
          x.insert(x.end(), features.rows[i].begin(), features.rows[i].end());
          y.push_back(row->score);
        } else {
          unscored.push_back(i);
        }
      }
      trees::EnsembleConfig cfg;
      cfg.method = trees::parse_method(method);
      cfg.n_trees = n_trees;
      cfg.c_mode = trees::parse_feature_subset(c_mode);
      cfg.min_split = min_split;
      cfg.seed = seed;
      cfg.threads = threads;
      const auto model = trees::fit_ensemble(trees::Dataset(width, std::move(x), std::move(y)), cfg);
      trees::save_model(out_path, model);
      if (!predict_out.empty()) {
        eval::ScoreTable pred;
        for (auto i : unscored) pred.add({features.keys[i], trees::predict(model, features.rows[i]), {}, {}, {}});
        eval::save_table_csv(predict_out, pred);
      }
    } else if (ws_cmd->parsed()) {
      const auto matrix = load_matrix(matrix_path);
      const auto years = parse_years(train_years);
      wordscores::TrainingSet ts;
      const auto reference = eval::load_table_csv(train_scores);
      for (const auto& row : reference.rows()) {
        if (years.contains(row.key.year) && matrix.doc_index(row.key)) {
          ts.keys.push_back(row.key);
          ts.scores.push_back(row.score);
        }
      }
      std::vector<DocKey> virgin;
      for (const auto& key : matrix.doc_keys())
        if (!years.contains(key.year)) virgin.push_back(key);
      const auto model = wordscores::fit_wordscores(matrix, ts);
      auto scored = wordscores::score_documents(model, matrix, virgin);
      for (const auto& key : scored.unscorable) std::fprintf(stderr, "unscorable: %s\n", key.str().c_str());
      const auto rescaled = wordscores::rescale(std::move(scored.scores), model);
      auto out = open_out(out_path);
      eval::write_wordscores_csv(out, rescaled);
    } else if (corr->parsed()) {
      std::printf("%.17g\n", eval::pearson(eval::load_table_csv(a_path), eval::load_table_csv(b_path)));
    } else if (summary->parsed()) {
      print_summary(eval::summary_by_year(eval::load_table_csv(a_path)));
    } else if (discrep->parsed()) {
      const auto r = eval::discrepancies(eval::load_table_csv(a_path), eval::load_table_csv(b_path), top_n);
      std::printf("side,entity,year,a,b,delta\n");
      for (const auto& d : r.largest_positive)
        std::printf("positive,%s,%d,%.6g,%.6g,%.6g\n", d.key.entity.c_str(), d.key.year, d.a, d.b, d.delta);
      for (const auto& d : r.largest_negative)
        std::printf("negative,%s,%d,%.6g,%.6g,%.6g\n", d.key.entity.c_str(), d.key.year, d.a, d.b, d.delta);
    } else if (overlap->parsed()) {
      const auto s = eval::ci_overlap_stats(eval::load_table_csv(a_path));
      std::printf("entity,year,overlaps\n");
      for (const auto& [key, c] : s.counts) std::printf("%s,%d,%zu\n", key.entity.c_str(), key.year, c);
      std::printf("# mean overlaps: %.6g\n", s.mean);
    } else if (dmeans->parsed()) {
      const auto t = eval::diff_of_means({m1, se1, 1}, {m2, se2, 1});
      std::printf("z=%.6g p_two_sided=%.6g p_one_sided=%.6g\n", t.z, t.p, t.p_one_sided);
    } else if (grid->parsed()) {
      pipeline::CorpusInputs inputs;
      inputs.matrix = load_matrix(matrix_path);
      if (!stoplist_path.empty()) inputs.stoplist = load_stoplist(stoplist_path);
      std::ifstream spec_in(grid_spec);
      if (!spec_in) throw std::runtime_error("cannot open " + grid_spec);
      const auto specs = pipeline::batch_specs_from_json(nlohmann::json::parse(spec_in));
      pipeline::BatchRunner runner(std::move(inputs));
      const auto report =
          pipeline::run_batch_grid(runner, specs, eval::load_table_csv(a_path), parse_years(train_years), grid_threads);
      if (out_path.empty()) {
        pipeline::write_grid_report(std::cout, report);
      } else {
        auto out = open_out(out_path);
        pipeline::write_grid_report(out, report);
      }
    } else if (serve->parsed()) {
      svc.data_dir = data_dir;
      svc.static_dir = static_dir;
      service::Service service(svc);
      if (!corpus_file.empty()) {
        std::ifstream in(corpus_file);
        if (!in) throw std::runtime_error("cannot open " + corpus_file);
        std::stringstream ss;
        ss << in.rdbuf();
        std::vector<std::string> stop;
        if (!stoplist_path.empty()) stop = load_stoplist(stoplist_path);
        const auto id = service.register_corpus(ss.str(), stop, corpus_file);
        std::fprintf(stderr, "registered corpus %s\n", id.c_str());
      }
      std::fprintf(stderr, "listening on %s:%d (data in %s)\n", svc.host.c_str(), svc.port, data_dir.c_str());
      service.serve();
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
