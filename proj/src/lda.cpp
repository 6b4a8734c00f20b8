#include "textscale/lda.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "textscale/rng.hpp"
#include "textscale/special.hpp"

namespace textscale::lda {

namespace {

constexpr double kTiny = 1e-100;

Eigen::MatrixXd expected_log_beta(const Eigen::MatrixXd& lambda) {
  Eigen::MatrixXd out(lambda.rows(), lambda.cols());
  for (Eigen::Index r = 0; r < lambda.rows(); ++r) {
    const double psi_total = digamma(lambda.row(r).sum());
    for (Eigen::Index c = 0; c < lambda.cols(); ++c) out(r, c) = digamma(lambda(r, c)) - psi_total;
  }
  return out;
}

Eigen::VectorXd expected_log_theta(const Eigen::VectorXd& gamma) {
  const double psi_total = digamma(gamma.sum());
  Eigen::VectorXd out(gamma.size());
  for (Eigen::Index i = 0; i < gamma.size(); ++i) out(i) = digamma(gamma(i)) - psi_total;
  return out;
}

// Variational E-step for one document. Returns gamma; if sstats is non-null,
// accumulates expElogtheta_k * count_w / phinorm_w into sstats(k, w).
Eigen::VectorXd infer_document(const std::vector<TermCount>& doc, const Eigen::VectorXd& alpha,
                               const Eigen::MatrixXd& exp_elog_beta, const LdaConfig& config,
                               Eigen::MatrixXd* sstats) {
  const auto k = alpha.size();
  std::uint64_t length = 0;
  for (const auto& e : doc) length += e.count;

  Eigen::VectorXd gamma = alpha.array() + static_cast<double>(length) / static_cast<double>(k);
  Eigen::VectorXd exp_elog_theta = expected_log_theta(gamma).array().exp();
  Eigen::VectorXd phinorm(static_cast<Eigen::Index>(doc.size()));

  auto update_phinorm = [&] {
    for (std::size_t d = 0; d < doc.size(); ++d)
      phinorm(static_cast<Eigen::Index>(d)) =
          exp_elog_theta.dot(exp_elog_beta.col(static_cast<Eigen::Index>(doc[d].word))) + kTiny;
  };
  update_phinorm();

  Eigen::VectorXd theta = gamma / gamma.sum();
  for (std::size_t iter = 0; iter < config.max_doc_iters; ++iter) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(k);
    for (std::size_t d = 0; d < doc.size(); ++d) {
      const double w = static_cast<double>(doc[d].count) / phinorm(static_cast<Eigen::Index>(d));
      acc += w * exp_elog_beta.col(static_cast<Eigen::Index>(doc[d].word));
    }
    gamma = alpha.array() + exp_elog_theta.array() * acc.array();
    exp_elog_theta = expected_log_theta(gamma).array().exp();
    update_phinorm();

    Eigen::VectorXd next = gamma / gamma.sum();
    const double change = (next - theta).cwiseAbs().mean();
    theta = std::move(next);
    if (change < config.doc_tol) break;
  }

  if (sstats != nullptr) {
    for (std::size_t d = 0; d < doc.size(); ++d) {
      const double w = static_cast<double>(doc[d].count) / phinorm(static_cast<Eigen::Index>(d));
      sstats->col(static_cast<Eigen::Index>(doc[d].word)) += w * exp_elog_theta;
    }
  }
  return gamma;
}

void check_vocabulary(const LdaModel& model, const SparseTermMatrix& matrix) {
  if (matrix.n_words() != model.n_words())
    throw std::invalid_argument("vocabulary size " + std::to_string(matrix.n_words()) +
                                " does not match model size " + std::to_string(model.n_words()));
  if (!model.words.empty() && model.words != matrix.vocab().words())
    throw std::invalid_argument("matrix vocabulary differs from the model vocabulary");
}

}  // namespace

void LdaConfig::validate() const {
  if (k < 1) throw std::invalid_argument("lda: k must be >= 1");
  if (eta < 0.0) throw std::invalid_argument("lda: eta must be positive");
  if (passes < 1) throw std::invalid_argument("lda: passes must be >= 1");
  if (!(kappa > 0.5 && kappa <= 1.0)) throw std::invalid_argument("lda: kappa must lie in (0.5, 1]");
  if (!(tau0 > 0.0)) throw std::invalid_argument("lda: tau0 must be positive");
  if (max_doc_iters < 1) throw std::invalid_argument("lda: max_doc_iters must be >= 1");
}

Eigen::VectorXd make_alpha(std::size_t k, AlphaMode mode) {
  Eigen::VectorXd alpha(static_cast<Eigen::Index>(k));
  if (mode == AlphaMode::symmetric) {
    alpha.setConstant(1.0 / static_cast<double>(k));
    return alpha;
  }
  const double root = std::sqrt(static_cast<double>(k));
  for (std::size_t i = 0; i < k; ++i) alpha(static_cast<Eigen::Index>(i)) = 1.0 / (static_cast<double>(i) + root);
  return alpha / alpha.sum();
}

Eigen::MatrixXd LdaModel::beta() const {
  Eigen::MatrixXd b = lambda;
  for (Eigen::Index r = 0; r < b.rows(); ++r) b.row(r) /= b.row(r).sum();
  return b;
}

LdaModel fit_lda(const SparseTermMatrix& matrix, const LdaConfig& config, const PassObserver& observer) {
  config.validate();
  const auto n = matrix.n_docs();
  const auto m = matrix.n_words();
  if (n == 0 || m == 0 || matrix.nnz() == 0) throw std::invalid_argument("lda: empty corpus");

  LdaModel model;
  model.config = config;
  model.alpha = make_alpha(config.k, config.alpha_mode);
  model.words = matrix.vocab().words();

  const auto k = static_cast<Eigen::Index>(config.k);
  const double eta = config.effective_eta();
  Rng rng(config.seed);
  model.lambda.resize(k, static_cast<Eigen::Index>(m));
  for (Eigen::Index c = 0; c < model.lambda.cols(); ++c)
    for (Eigen::Index r = 0; r < k; ++r) model.lambda(r, c) = rng.gamma(100.0, 0.01);

  const std::size_t batch = config.batch_size == 0 ? n : std::min(config.batch_size, n);
  for (std::size_t pass = 1; pass <= config.passes; ++pass) {
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(start + batch, n);
      const Eigen::MatrixXd exp_elog_beta = expected_log_beta(model.lambda).array().exp();
      Eigen::MatrixXd sstats = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(m));
      for (std::size_t j = start; j < stop; ++j)
        infer_document(matrix.column(j), model.alpha, exp_elog_beta, config, &sstats);
      sstats.array() *= exp_elog_beta.array();

      const double rho = std::pow(config.tau0 + static_cast<double>(model.updates), -config.kappa);
      const double scale = static_cast<double>(n) / static_cast<double>(stop - start);
      model.lambda = (1.0 - rho) * model.lambda + rho * ((scale * sstats).array() + eta).matrix();
      ++model.updates;
    }
    if (observer) observer(pass, model);
  }
  return model;
}

DocTopicMatrix infer_theta(const LdaModel& model, const SparseTermMatrix& matrix) {
  check_vocabulary(model, matrix);
  const Eigen::MatrixXd exp_elog_beta = expected_log_beta(model.lambda).array().exp();
  DocTopicMatrix out;
  out.doc_keys = matrix.doc_keys();
  out.theta.resize(static_cast<Eigen::Index>(matrix.n_docs()), static_cast<Eigen::Index>(model.k()));
  for (std::size_t j = 0; j < matrix.n_docs(); ++j) {
    const Eigen::VectorXd gamma = infer_document(matrix.column(j), model.alpha, exp_elog_beta, model.config, nullptr);
    out.theta.row(static_cast<Eigen::Index>(j)) = (gamma / gamma.sum()).transpose();
  }
  return out;
}

double elbo(const LdaModel& model, const SparseTermMatrix& matrix) {
  check_vocabulary(model, matrix);
  const Eigen::MatrixXd elog_beta = expected_log_beta(model.lambda);
  const Eigen::MatrixXd exp_elog_beta = elog_beta.array().exp();
  const double eta = model.config.effective_eta();
  const double alpha_sum = model.alpha.sum();

  double bound = 0.0;
  for (std::size_t j = 0; j < matrix.n_docs(); ++j) {
    const auto& doc = matrix.column(j);
    const Eigen::VectorXd gamma = infer_document(doc, model.alpha, exp_elog_beta, model.config, nullptr);
    const Eigen::VectorXd elog_theta = expected_log_theta(gamma);
    // Words: sum_w n_w log sum_k exp(E[log theta_k] + E[log beta_kw]), with a
    // max shift for stability.
    for (const auto& e : doc) {
      const Eigen::VectorXd t = elog_theta + elog_beta.col(static_cast<Eigen::Index>(e.word));
      const double mx = t.maxCoeff();
      bound += static_cast<double>(e.count) * (mx + std::log((t.array() - mx).exp().sum()));
    }
    for (Eigen::Index i = 0; i < gamma.size(); ++i) {
      bound += (model.alpha(i) - gamma(i)) * elog_theta(i) + std::lgamma(gamma(i)) - std::lgamma(model.alpha(i));
    }
    bound += std::lgamma(alpha_sum) - std::lgamma(gamma.sum());
  }

  const double m = static_cast<double>(model.n_words());
  for (Eigen::Index r = 0; r < model.lambda.rows(); ++r) {
    for (Eigen::Index c = 0; c < model.lambda.cols(); ++c) {
      bound += (eta - model.lambda(r, c)) * elog_beta(r, c) + std::lgamma(model.lambda(r, c)) - std::lgamma(eta);
    }
    bound += std::lgamma(eta * m) - std::lgamma(model.lambda.row(r).sum());
  }
  return bound;
}

void write_model(std::ostream& out, const LdaModel& model) {
  const auto old_precision = out.precision(17);
  const Eigen::MatrixXd b = model.beta();
  out << model.k() << ' ' << model.n_words() << '\n';
  for (Eigen::Index i = 0; i < model.alpha.size(); ++i) out << (i ? " " : "") << model.alpha(i);
  out << '\n';
  for (Eigen::Index r = 0; r < b.rows(); ++r) {
    for (Eigen::Index c = 0; c < b.cols(); ++c) out << (c ? " " : "") << b(r, c);
    out << '\n';
  }
  out << "eta " << model.config.effective_eta() << " totals";
  for (Eigen::Index r = 0; r < model.lambda.rows(); ++r) out << ' ' << model.lambda.row(r).sum();
  out << '\n';
  out.precision(old_precision);
}

LdaModel read_model(std::istream& in) {
  Eigen::Index k = 0, m = 0;
  if (!(in >> k >> m) || k < 1 || m < 0) throw std::runtime_error("lda model: bad header");
  auto read = [&](double& v) {
    if (!(in >> v)) throw std::runtime_error("lda model: truncated data");
  };
  LdaModel model;
  model.config.k = static_cast<std::size_t>(k);
  model.alpha.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) read(model.alpha(i));
  model.lambda.resize(k, m);
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = 0; c < m; ++c) read(model.lambda(r, c));

  std::string tag;
  if (in >> tag && tag == "eta") {
    read(model.config.eta);
    if (!(in >> tag) || tag != "totals") throw std::runtime_error("lda model: expected totals");
    for (Eigen::Index r = 0; r < k; ++r) {
      double total = 0.0;
      read(total);
      model.lambda.row(r) *= total;
    }
  }
  return model;
}

void save_model(const std::filesystem::path& file, const LdaModel& model) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  write_model(out, model);
}

LdaModel load_model(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  return read_model(in);
}

}  // namespace textscale::lda
