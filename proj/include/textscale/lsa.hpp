#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "textscale/corpus.hpp"

namespace textscale::lsa {

/// Weighted term-document matrix with the same shape and keys as its source.
struct TfidfMatrix {
  Eigen::SparseMatrix<double> values;  // m x n, column-major
  std::vector<std::string> words;
  std::vector<DocKey> doc_keys;
  bool normalized = false;
};

/// Truncated SVD: A ~ U * diag(sigma) * Vt.
struct SvdFactors {
  Eigen::MatrixXd U;      // m x k
  Eigen::VectorXd sigma;  // k, non-increasing
  Eigen::MatrixXd Vt;     // k x n

  std::size_t k() const { return static_cast<std::size_t>(sigma.size()); }
};

/// Topic x document scores diag(sigma) * Vt.
struct TopicDocMatrix {
  Eigen::MatrixXd scores;  // k x n
  std::vector<DocKey> doc_keys;
};

struct SvdOptions {
  std::size_t oversample = 10;
  std::size_t power_iters = 4;
};

/// count(i,j) * ln(n / df_i); words present in every document get 0.
TfidfMatrix tfidf(const SparseTermMatrix& matrix);

/// Scales every non-zero column to unit Euclidean norm. Zero columns stay zero.
TfidfMatrix normalize_columns(const TfidfMatrix& matrix);

/// Randomized range finder with power iterations followed by an exact SVD of
/// the projected matrix. Deterministic for a given seed. Throws
/// std::invalid_argument unless 1 <= k <= min(m, n).
SvdFactors randomized_svd(const Eigen::SparseMatrix<double>& A, std::size_t k, std::uint64_t seed,
                          const SvdOptions& options = {});
SvdFactors randomized_svd(const TfidfMatrix& A, std::size_t k, std::uint64_t seed,
                          const SvdOptions& options = {});

/// Dense exact SVD truncated to k.
SvdFactors exact_svd(const Eigen::MatrixXd& A, std::size_t k);

/// Largest dimension for which exact_svd is considered affordable.
inline constexpr std::size_t kExactSvdLimit = 512;

/// Flips each singular pair so the largest-magnitude entry of every U column
/// is positive.
void canonicalize_signs(SvdFactors& f);

TopicDocMatrix topic_doc_scores(const SvdFactors& f, std::vector<DocKey> doc_keys = {});

/// Words of one topic ordered by |weight| descending, ties by vocabulary index.
std::vector<std::pair<std::string, double>> top_words(const SvdFactors& f,
                                                      const std::vector<std::string>& words,
                                                      std::size_t topic, std::size_t count);

/// tfidf -> normalize -> randomized_svd.
SvdFactors fit_lsa(const SparseTermMatrix& matrix, std::size_t k, std::uint64_t seed,
                   const SvdOptions& options = {});

// Text format: "m n k", then sigma on one line, then U row-major (m lines of
// k values), then Vt row-major (k lines of n values); 17 significant digits.
void write_factors(std::ostream& out, const SvdFactors& f);
SvdFactors read_factors(std::istream& in);
void save_factors(const std::filesystem::path& file, const SvdFactors& f);
SvdFactors load_factors(const std::filesystem::path& file);

}  // namespace textscale::lsa
