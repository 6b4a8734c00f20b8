#include "textscale/lsa.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "textscale/rng.hpp"

namespace textscale::lsa {

namespace {

Eigen::MatrixXd orthonormal_basis(const Eigen::MatrixXd& Y) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Y);
  return qr.householderQ() * Eigen::MatrixXd::Identity(Y.rows(), Y.cols());
}

}  // namespace

TfidfMatrix tfidf(const SparseTermMatrix& matrix) {
  const auto m = matrix.n_words();
  const auto n = matrix.n_docs();
  if (n == 0) throw std::invalid_argument("tfidf of an empty corpus");

  std::vector<double> idf(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto df = matrix.vocab().df(i);
    idf[i] = df == n ? 0.0 : std::log(static_cast<double>(n) / static_cast<double>(df));
  }

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(matrix.nnz());
  for (std::size_t j = 0; j < n; ++j) {
    for (const auto& e : matrix.column(j)) {
      const double v = static_cast<double>(e.count) * idf[e.word];
      if (v != 0.0) triplets.emplace_back(static_cast<int>(e.word), static_cast<int>(j), v);
    }
  }
  TfidfMatrix out;
  out.values.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  out.values.setFromTriplets(triplets.begin(), triplets.end());
  out.values.makeCompressed();
  out.words = matrix.vocab().words();
  out.doc_keys = matrix.doc_keys();
  return out;
}

TfidfMatrix normalize_columns(const TfidfMatrix& matrix) {
  TfidfMatrix out = matrix;
  for (Eigen::Index j = 0; j < out.values.outerSize(); ++j) {
    double sq = 0.0;
    for (Eigen::SparseMatrix<double>::InnerIterator it(out.values, j); it; ++it) sq += it.value() * it.value();
    if (sq == 0.0) continue;
    const double norm = std::sqrt(sq);
    for (Eigen::SparseMatrix<double>::InnerIterator it(out.values, j); it; ++it) it.valueRef() /= norm;
  }
  out.normalized = true;
  return out;
}

void canonicalize_signs(SvdFactors& f) {
  for (Eigen::Index c = 0; c < f.U.cols(); ++c) {
    Eigen::Index arg = 0;
    f.U.col(c).cwiseAbs().maxCoeff(&arg);
    if (f.U(arg, c) < 0) {
      f.U.col(c) *= -1.0;
      f.Vt.row(c) *= -1.0;
    }
  }
}

SvdFactors randomized_svd(const Eigen::SparseMatrix<double>& A, std::size_t k, std::uint64_t seed,
                          const SvdOptions& options) {
  const auto m = static_cast<std::size_t>(A.rows());
  const auto n = static_cast<std::size_t>(A.cols());
  if (k < 1 || k > std::min(m, n))
    throw std::invalid_argument("randomized_svd: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(std::min(m, n)) + "]");

  const auto width = static_cast<Eigen::Index>(std::min(k + options.oversample, std::min(m, n)));
  Rng rng(seed);
  Eigen::MatrixXd omega(static_cast<Eigen::Index>(n), width);
  for (Eigen::Index c = 0; c < width; ++c) {
    for (Eigen::Index r = 0; r < omega.rows(); ++r) omega(r, c) = rng.normal();
  }

  const Eigen::SparseMatrix<double> At = A.transpose();
  Eigen::MatrixXd Q = orthonormal_basis(A * omega);
  for (std::size_t it = 0; it < options.power_iters; ++it) {
    const Eigen::MatrixXd Z = orthonormal_basis(At * Q);
    Q = orthonormal_basis(A * Z);
  }

  // B = Q' A, computed as (A' Q)' to stay with sparse-times-dense products.
  const Eigen::MatrixXd B = (At * Q).transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeThinU | Eigen::ComputeThinV);

  const auto kk = static_cast<Eigen::Index>(k);
  SvdFactors f;
  f.U = Q * svd.matrixU().leftCols(kk);
  f.sigma = svd.singularValues().head(kk);
  f.Vt = svd.matrixV().leftCols(kk).transpose();
  canonicalize_signs(f);
  return f;
}

SvdFactors randomized_svd(const TfidfMatrix& A, std::size_t k, std::uint64_t seed, const SvdOptions& options) {
  return randomized_svd(A.values, k, seed, options);
}

SvdFactors exact_svd(const Eigen::MatrixXd& A, std::size_t k) {
  const auto lim = static_cast<std::size_t>(std::min(A.rows(), A.cols()));
  if (k < 1 || k > lim) throw std::invalid_argument("exact_svd: k out of range");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto kk = static_cast<Eigen::Index>(k);
  SvdFactors f;
  f.U = svd.matrixU().leftCols(kk);
  f.sigma = svd.singularValues().head(kk);
  f.Vt = svd.matrixV().leftCols(kk).transpose();
  canonicalize_signs(f);
  return f;
}

TopicDocMatrix topic_doc_scores(const SvdFactors& f, std::vector<DocKey> doc_keys) {
  TopicDocMatrix out;
  out.scores = f.sigma.asDiagonal() * f.Vt;
  out.doc_keys = std::move(doc_keys);
  return out;
}

std::vector<std::pair<std::string, double>> top_words(const SvdFactors& f, const std::vector<std::string>& words,
                                                      std::size_t topic, std::size_t count) {
  if (topic >= f.k()) throw std::out_of_range("topic " + std::to_string(topic) + " >= k");
  if (words.size() != static_cast<std::size_t>(f.U.rows()))
    throw std::invalid_argument("vocabulary size does not match factor rows");
  std::vector<std::size_t> order(words.size());
  std::iota(order.begin(), order.end(), 0);
  const auto col = f.U.col(static_cast<Eigen::Index>(topic));
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(col(static_cast<Eigen::Index>(a))) > std::abs(col(static_cast<Eigen::Index>(b)));
  });
  order.resize(std::min(count, order.size()));
  std::vector<std::pair<std::string, double>> out;
  out.reserve(order.size());
  for (auto i : order) out.emplace_back(words[i], col(static_cast<Eigen::Index>(i)));
  return out;
}

SvdFactors fit_lsa(const SparseTermMatrix& matrix, std::size_t k, std::uint64_t seed, const SvdOptions& options) {
  return randomized_svd(normalize_columns(tfidf(matrix)), k, seed, options);
}

void write_factors(std::ostream& out, const SvdFactors& f) {
  const auto old_precision = out.precision(17);
  out << f.U.rows() << ' ' << f.Vt.cols() << ' ' << f.k() << '\n';
  for (Eigen::Index i = 0; i < f.sigma.size(); ++i) out << (i ? " " : "") << f.sigma(i);
  out << '\n';
  auto write_rows = [&](const Eigen::MatrixXd& M) {
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
      for (Eigen::Index c = 0; c < M.cols(); ++c) out << (c ? " " : "") << M(r, c);
      out << '\n';
    }
  };
  write_rows(f.U);
  write_rows(f.Vt);
  out.precision(old_precision);
}

SvdFactors read_factors(std::istream& in) {
  Eigen::Index m = 0, n = 0, k = 0;
  if (!(in >> m >> n >> k) || m < 0 || n < 0 || k < 0) throw std::runtime_error("factors: bad header");
  SvdFactors f;
  f.sigma.resize(k);
  f.U.resize(m, k);
  f.Vt.resize(k, n);
  auto read = [&](double& v) {
    if (!(in >> v)) throw std::runtime_error("factors: truncated data");
  };
  for (Eigen::Index i = 0; i < k; ++i) read(f.sigma(i));
  for (Eigen::Index r = 0; r < m; ++r)
    for (Eigen::Index c = 0; c < k; ++c) read(f.U(r, c));
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = 0; c < n; ++c) read(f.Vt(r, c));
  return f;
}

void save_factors(const std::filesystem::path& file, const SvdFactors& f) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  write_factors(out, f);
}

SvdFactors load_factors(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  return read_factors(in);
}

}  // namespace textscale::lsa
