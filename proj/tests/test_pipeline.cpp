#include <sstream>

#include "doctest.h"
#include "oracles/planted.hpp"
#include "textscale/pipeline.hpp"
#include "textscale/wordscores.hpp"

using namespace textscale;
using namespace textscale::pipeline;

namespace {

struct Fixture {
  oracle::PlantedCorpus corpus;
  SparseTermMatrix matrix;
  GridSplit split;
};

Fixture planted(std::size_t entities = 24) {
  oracle::PlantedConfig cfg;
  cfg.entities = entities;
  cfg.min_tokens = 150;
  cfg.max_tokens = 400;
  Fixture f;
  f.corpus = oracle::make_planted_corpus(cfg);
  f.matrix = ingest(f.corpus.docs, {});
  f.split = split_by_years(f.corpus.latent, {2000});
  return f;
}

BatchSpec topic_spec(Approach a, trees::Method m) {
  BatchSpec s;
  s.approach = a;
  s.k = 4;
  s.tree_method = m;
  s.n_trees = 20;
  s.lda_passes = 3;
  s.seed = 3;
  return s;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("batch spec json") {
    auto s = topic_spec(Approach::lda_trees, trees::Method::adaboost_r2);
    s.variant = CorpusVariant::B;
    s.alpha_mode = lda::AlphaMode::asymmetric_normalized;
    s.c_mode = trees::FeatureSubset::sqrt_x;
    const auto back = batch_spec_from_json(to_json(s));
    CHECK(to_json(back) == to_json(s));
    CHECK(back.label() == s.label());

    const auto d = batch_spec_from_json(nlohmann::json::object());
    CHECK(d.approach == Approach::wordscores);
    CHECK(d.variant == CorpusVariant::A);
    CHECK_THROWS_AS(batch_spec_from_json({{"approach", "svm"}}), std::invalid_argument);
    CHECK_THROWS_AS(batch_spec_from_json({{"approach", "lsa"}, {"k", 0}}), std::invalid_argument);
    CHECK_THROWS_AS(batch_spec_from_json({{"k", "many"}}), std::invalid_argument);
    CHECK(batch_specs_from_json({{"batches", {{{"approach", "ws"}}, {{"approach", "lsa"}}}}}).size() == 2);
  }

  TEST_CASE("wordscores batch equals direct composition") {
    auto f = planted();
    BatchRunner runner({f.matrix, {}, 2});
    const auto via_runner = runner.run(BatchSpec{}, f.split.training);

    wordscores::TrainingSet ts;
    for (const auto& r : f.split.training.rows()) {
      ts.keys.push_back(r.key);
      ts.scores.push_back(r.score);
    }
    std::vector<DocKey> virgin;
    for (const auto& k : f.matrix.doc_keys())
      if (!f.split.training.find(k)) virgin.push_back(k);
    const auto model = wordscores::fit_wordscores(f.matrix, ts);
    const auto direct =
        eval::from_virgin_scores(wordscores::rescale(wordscores::score_documents(model, f.matrix, virgin).scores, model));
    CHECK(via_runner == direct);

    const auto report = run_batch_grid(runner, {BatchSpec{}}, f.corpus.latent, {2000});
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0].error.empty());
    CHECK(report.rows[0].correlation == eval::pearson(direct, f.split.test_reference));
    CHECK(report.rows[0].n == virgin.size());
  }

  TEST_CASE("identical specs give identical correlations") {
    auto f = planted(16);
    BatchRunner runner({f.matrix, {}, 2});
    const std::vector<BatchSpec> specs{topic_spec(Approach::lsa_trees, trees::Method::random_forest),
                                       topic_spec(Approach::lsa_trees, trees::Method::random_forest),
                                       topic_spec(Approach::lda_trees, trees::Method::extreme_forest),
                                       topic_spec(Approach::lda_trees, trees::Method::extreme_forest)};
    const auto serial = run_batch_grid(runner, specs, f.corpus.latent, {2000}, 1);
    CHECK(serial.rows[0].correlation == serial.rows[1].correlation);
    CHECK(serial.rows[2].correlation == serial.rows[3].correlation);
    BatchRunner fresh({f.matrix, {}, 2});
    const auto parallel = run_batch_grid(fresh, specs, f.corpus.latent, {2000}, 3);
    for (std::size_t i = 0; i < specs.size(); ++i) CHECK(parallel.rows[i].correlation == serial.rows[i].correlation);
  }

  TEST_CASE("topic batches score every held-out document") {
    auto f = planted(12);
    BatchRunner runner({f.matrix, {}, 2});
    for (auto a : {Approach::lsa_trees, Approach::lda_trees}) {
      for (auto m : {trees::Method::single_tree, trees::Method::random_forest, trees::Method::extreme_forest,
                     trees::Method::adaboost_r2}) {
        const auto t = runner.run(topic_spec(a, m), f.split.training);
        CHECK(t.size() == f.split.test_reference.size());
        for (const auto& r : t.rows()) CHECK_FALSE(r.std_error);
      }
    }
  }

  TEST_CASE("variant B batches use the filtered matrix") {
    auto f = planted(12);
    BatchRunner runner({f.matrix, {oracle::planted_word('n', 0)}, 2});
    CHECK(runner.matrix(CorpusVariant::B).n_words() < f.matrix.n_words());
    BatchSpec s;
    s.variant = CorpusVariant::B;
    CHECK(runner.run(s, f.split.training).size() == f.split.test_reference.size());
  }

  TEST_CASE("errors are reported per batch") {
    auto f = planted(6);
    BatchRunner runner({f.matrix, {}, 2});
    eval::ScoreTable one;
    one.add(f.split.training.rows()[0]);
    CHECK_THROWS_AS(runner.run(BatchSpec{}, one), std::invalid_argument);
    auto big_k = topic_spec(Approach::lsa_trees, trees::Method::random_forest);
    big_k.k = 10000;
    const auto report = run_batch_grid(runner, {big_k, BatchSpec{}}, f.corpus.latent, {2000});
    CHECK_FALSE(report.rows[0].error.empty());
    CHECK(report.rows[1].error.empty());
  }

  TEST_CASE("larger documents have narrower intervals") {
    oracle::PlantedConfig cfg;
    cfg.entities = 60;
    cfg.min_tokens = 40;
    cfg.max_tokens = 3000;
    const auto corpus = oracle::make_planted_corpus(cfg);
    const auto matrix = ingest(corpus.docs, {});
    BatchRunner runner({matrix, {}, 2});
    const auto split = split_by_years(corpus.latent, {2000});
    const auto scores = runner.run(BatchSpec{}, split.training);
    std::map<DocKey, double> sizes;
    for (std::size_t j = 0; j < matrix.n_docs(); ++j) sizes[matrix.doc_key(j)] = static_cast<double>(matrix.doc_length(j));
    const auto pairs = eval::range_vs_size(scores, sizes);
    std::vector<double> size, range;
    for (const auto& p : pairs) {
      size.push_back(p.size);
      range.push_back(p.range);
    }
    CHECK(eval::spearman(size, range) < 0);
  }

  TEST_CASE("grid report layout") {
    GridReport r;
    r.rows.push_back({BatchSpec{}, 0.5, 10, ""});
    r.rows.push_back({topic_spec(Approach::lsa_trees, trees::Method::adaboost_r2), -0.25, 10, ""});
    r.rows.push_back({topic_spec(Approach::lda_trees, trees::Method::single_tree), 0, 0, "boom"});
    std::stringstream ss;
    write_grid_report(ss, r);
    const auto text = ss.str();
    CHECK(text.rfind("label,approach,variant,k,method,c,l,alpha,seed,n,correlation,error\n", 0) == 0);
    CHECK(text.find("0.500000") != std::string::npos);
    CHECK(text.find(",boom\n") != std::string::npos);
    CHECK(text.find("4,lsa,,,,-0.250000") != std::string::npos);
  }
}
