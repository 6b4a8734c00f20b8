#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "textscale/corpus.hpp"

namespace textscale::lda {

enum class AlphaMode { symmetric, asymmetric_normalized };

struct LdaConfig {
  std::size_t k = 10;
  AlphaMode alpha_mode = AlphaMode::symmetric;
  double eta = 0.0;  // topic-word prior; 0 means 1/k
  std::size_t passes = 10;
  std::size_t batch_size = 256;  // documents per online update; 0 means full corpus
  double kappa = 0.7;
  double tau0 = 1.0;
  std::uint64_t seed = 0;
  std::size_t max_doc_iters = 100;
  double doc_tol = 1e-5;  // mean absolute change of the normalized theta row

  double effective_eta() const { return eta > 0.0 ? eta : 1.0 / static_cast<double>(k); }
  void validate() const;
};

/// Symmetric: every entry 1/k. Asymmetric normalized: proportional to
/// 1/(i + sqrt(k)) and rescaled to sum to 1.
Eigen::VectorXd make_alpha(std::size_t k, AlphaMode mode);

struct LdaModel {
  LdaConfig config;
  Eigen::VectorXd alpha;   // k
  Eigen::MatrixXd lambda;  // k x m variational topic-word parameters
  std::vector<std::string> words;  // empty when loaded from a model file
  std::size_t updates = 0;

  std::size_t k() const { return static_cast<std::size_t>(lambda.rows()); }
  std::size_t n_words() const { return static_cast<std::size_t>(lambda.cols()); }

  /// Topic-word distributions: lambda with each row normalized.
  Eigen::MatrixXd beta() const;
};

/// Document-topic proportions, one row per document.
struct DocTopicMatrix {
  Eigen::MatrixXd theta;  // n x k
  std::vector<DocKey> doc_keys;
};

/// Called after every completed pass with the pass number (1-based).
using PassObserver = std::function<void(std::size_t pass, const LdaModel&)>;

/// Online variational Bayes. Batches follow matrix column order.
LdaModel fit_lda(const SparseTermMatrix& matrix, const LdaConfig& config, const PassObserver& observer = {});

/// Per-document variational posterior, normalized. Throws
/// std::invalid_argument if the vocabulary does not match the model.
DocTopicMatrix infer_theta(const LdaModel& model, const SparseTermMatrix& matrix);

/// Variational lower bound on log p(corpus | alpha, eta) with per-document
/// parameters fitted against the model.
double elbo(const LdaModel& model, const SparseTermMatrix& matrix);

// Text format: "k m", alpha line, k beta rows of m values, then a trailing
// line "eta <eta> totals <sum_w lambda_kw for each k>" so lambda can be
// restored exactly; 17 significant digits.
void write_model(std::ostream& out, const LdaModel& model);
LdaModel read_model(std::istream& in);
void save_model(const std::filesystem::path& file, const LdaModel& model);
LdaModel load_model(const std::filesystem::path& file);

}  // namespace textscale::lda
