#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "textscale/lda.hpp"
#include "textscale/rng.hpp"
#include "textscale/special.hpp"

using namespace textscale;
using namespace textscale::lda;

namespace {

SparseTermMatrix from_columns(std::size_t m, const std::vector<std::vector<TermCount>>& cols) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < m; ++i) words.push_back("w" + std::to_string(100 + i));
  std::vector<DocKey> keys;
  for (std::size_t j = 0; j < cols.size(); ++j) keys.push_back({"D" + std::to_string(j), 2000});
  return SparseTermMatrix(words, keys, cols);
}

// Documents alternate between two disjoint vocabularies of `half` words.
SparseTermMatrix two_blocks(std::size_t per_block, std::size_t half, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<TermCount>> cols;
  for (std::size_t d = 0; d < 2 * per_block; ++d) {
    const std::size_t offset = d % 2 == 0 ? 0 : half;
    std::vector<std::uint64_t> counts(half, 0);
    for (std::size_t t = 30 + rng.below(30); t > 0; --t) ++counts[rng.below(half)];
    std::vector<TermCount> col;
    for (std::size_t i = 0; i < half; ++i)
      if (counts[i] > 0) col.push_back({offset + i, counts[i]});
    cols.push_back(col);
  }
  return from_columns(2 * half, cols);
}

LdaConfig config(std::size_t k, std::size_t passes, std::size_t batch = 0) {
  LdaConfig c;
  c.k = k;
  c.passes = passes;
  c.batch_size = batch;
  c.seed = 42;
  return c;
}

}  // namespace

TEST_SUITE("lda") {
  TEST_CASE("digamma agrees with boost") {
    for (double x : {1e-3, 0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 5.99, 6.0, 10.0, 123.4, 1e5}) {
      CHECK(digamma(x) == doctest::Approx(boost::math::digamma(x)).epsilon(1e-13));
    }
  }

  TEST_CASE("alpha modes") {
    const auto sym = make_alpha(5, AlphaMode::symmetric);
    for (int i = 0; i < 5; ++i) CHECK(sym(i) == 0.2);
    const auto asym = make_alpha(5, AlphaMode::asymmetric_normalized);
    CHECK(asym.sum() == doctest::Approx(1.0).epsilon(1e-15));
    for (int i = 1; i < 5; ++i) CHECK(asym(i) < asym(i - 1));
  }

  TEST_CASE("one topic recovers the smoothed word distribution") {
    const auto m = from_columns(3, {{{0, 4}, {1, 1}}, {{1, 2}, {2, 3}}, {{0, 1}}});
    auto cfg = config(1, 1);
    const auto model = fit_lda(m, cfg);
    const double eta = cfg.effective_eta();
    const double n[3] = {5, 3, 3};
    const double total = 11 + 3 * eta;
    const auto beta = model.beta();
    for (int w = 0; w < 3; ++w) CHECK(beta(0, w) == doctest::Approx((n[w] + eta) / total).epsilon(1e-12));
    const auto theta = infer_theta(model, m).theta;
    for (int j = 0; j < 3; ++j) CHECK(theta(j, 0) == 1.0);
  }

  TEST_CASE("empty documents get the normalized prior") {
    const auto m = from_columns(2, {{{0, 3}}, {}, {{1, 2}}});
    for (auto mode : {AlphaMode::symmetric, AlphaMode::asymmetric_normalized}) {
      auto cfg = config(3, 2);
      cfg.alpha_mode = mode;
      const auto model = fit_lda(m, cfg);
      const auto theta = infer_theta(model, m).theta;
      const Eigen::VectorXd prior = model.alpha / model.alpha.sum();
      for (int i = 0; i < 3; ++i) CHECK(theta(1, i) == prior(i));
    }
  }

  TEST_CASE("separable corpus") {
    const auto m = two_blocks(50, 10, 3);
    const auto model = fit_lda(m, config(2, 10, 256));
    const auto beta = model.beta();
    for (int r = 0; r < 2; ++r) {
      const double first = beta.row(r).head(10).sum(), second = beta.row(r).tail(10).sum();
      CHECK(std::max(first, second) >= 0.95);
    }
    const int topic_of_first = beta.row(0).head(10).sum() > 0.5 ? 0 : 1;
    CHECK(beta(topic_of_first, 0) > beta(1 - topic_of_first, 0));
    const auto theta = infer_theta(model, m).theta;
    for (Eigen::Index d = 0; d < theta.rows(); ++d) {
      const int block_topic = d % 2 == 0 ? topic_of_first : 1 - topic_of_first;
      CHECK(theta(d, block_topic) >= 0.9);
    }
  }

  TEST_CASE("rows stay normalized after every pass") {
    const auto m = two_blocks(20, 6, 8);
    int passes_seen = 0;
    fit_lda(m, config(3, 5, 7), [&](std::size_t, const LdaModel& model) {
      ++passes_seen;
      const auto beta = model.beta();
      for (Eigen::Index r = 0; r < beta.rows(); ++r) {
        CHECK(std::abs(beta.row(r).sum() - 1.0) < 1e-8);
        CHECK(beta.row(r).minCoeff() > 0.0);
      }
      const auto theta = infer_theta(model, m).theta;
      for (Eigen::Index d = 0; d < theta.rows(); ++d) CHECK(std::abs(theta.row(d).sum() - 1.0) < 1e-8);
    });
    CHECK(passes_seen == 5);
  }

  TEST_CASE("fixed seed is deterministic") {
    const auto m = two_blocks(15, 5, 1);
    const auto a = fit_lda(m, config(2, 3, 8)), b = fit_lda(m, config(2, 3, 8));
    CHECK(a.lambda == b.lambda);
    auto other = config(2, 3, 8);
    other.seed = 43;
    CHECK(fit_lda(m, other).lambda != a.lambda);
  }

  TEST_CASE("elbo is pure and improves with passes") {
    const auto m = two_blocks(20, 8, 4);
    const auto one = fit_lda(m, config(2, 1));
    const auto ten = fit_lda(m, config(2, 10));
    CHECK(elbo(one, m) == elbo(one, m));
    CHECK(elbo(ten, m) >= elbo(one, m) - 1e-6);
  }

  TEST_CASE("elbo closed forms") {
    // One word, one topic: every expectation is zero and so is the bound.
    const auto single = from_columns(1, {{{0, 3}}});
    CHECK(std::abs(elbo(fit_lda(single, config(1, 1)), single)) < 1e-12);

    // One topic, two words with counts (a, b): lambda = eta + counts after a
    // full-batch first update, theta is degenerate, leaving the word and beta
    // terms.
    const double a = 3, b = 5;
    const auto two = from_columns(2, {{{0, 3}, {1, 5}}});
    const auto model = fit_lda(two, config(1, 1));
    const double eta = 1.0;
    const double l0 = eta + a, l1 = eta + b, total = l0 + l1;
    using boost::math::digamma;
    const double e0 = digamma(l0) - digamma(total), e1 = digamma(l1) - digamma(total);
    const double expected = a * e0 + b * e1 + (eta - l0) * e0 + (eta - l1) * e1 + std::lgamma(l0) + std::lgamma(l1) -
                            2 * std::lgamma(eta) + std::lgamma(2 * eta) - std::lgamma(total);
    CHECK(model.lambda(0, 0) == doctest::Approx(l0).epsilon(1e-14));
    CHECK(elbo(model, two) == doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("vocabulary mismatch") {
    const auto m = two_blocks(5, 4, 2);
    const auto model = fit_lda(m, config(2, 1));
    const auto other = from_columns(5, {{{0, 1}}});
    CHECK_THROWS_AS(infer_theta(model, other), std::invalid_argument);
    CHECK_THROWS_AS(elbo(model, other), std::invalid_argument);
    std::vector<std::string> renamed;
    for (std::size_t i = 0; i < 8; ++i) renamed.push_back("z" + std::to_string(i));
    const SparseTermMatrix same_size(renamed, {{"X", 1}}, {{{0, 2}}});
    CHECK_THROWS_AS(infer_theta(model, same_size), std::invalid_argument);
  }

  TEST_CASE("invalid configuration") {
    const auto m = two_blocks(3, 3, 1);
    auto bad = config(0, 1);
    CHECK_THROWS_AS(fit_lda(m, bad), std::invalid_argument);
    bad = config(2, 1);
    bad.kappa = 0.3;
    CHECK_THROWS_AS(fit_lda(m, bad), std::invalid_argument);
    CHECK_THROWS_AS(fit_lda(from_columns(2, {{}, {}}), config(2, 1)), std::invalid_argument);
  }

  TEST_CASE("model file round trip") {
    const auto m = two_blocks(10, 5, 6);
    const auto model = fit_lda(m, config(3, 2, 4));
    std::stringstream ss;
    write_model(ss, model);
    const auto back = read_model(ss);
    CHECK(back.alpha == model.alpha);
    CHECK((back.lambda - model.lambda).cwiseAbs().maxCoeff() < 1e-10 * model.lambda.maxCoeff());
    CHECK((back.beta() - model.beta()).cwiseAbs().maxCoeff() < 1e-15);
    const auto t1 = infer_theta(model, m).theta, t2 = infer_theta(back, m).theta;
    CHECK((t1 - t2).cwiseAbs().maxCoeff() < 1e-9);
  }
}
