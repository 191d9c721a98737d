#include "crtopt/gls.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "crtopt/errors.hpp"

namespace crtopt {

double attenuation_constant() { return 16.0 * std::sqrt(3.0) / (15.0 * std::numbers::pi); }

double iterated_weight(const ModelSpec& model, double sigma2, double eta, double re_variance) {
  if (model.family == Family::gaussian_identity) return 1.0 / sigma2;
  if (!std::isfinite(eta)) throw NumericError("non-finite linear predictor");
  if (model.attenuate) eta /= std::sqrt(1.0 + attenuation_constant() * re_variance);
  switch (model.family) {
    case Family::binomial_logit: {
      const double mu = 1.0 / (1.0 + std::exp(-eta));
      return mu * (1.0 - mu);
    }
    case Family::poisson_log:
      return std::exp(eta);
    case Family::gaussian_identity:
      break;
  }
  return 1.0 / sigma2;
}

Eigen::VectorXd glm_weight_diagonal(const ModelSpec& model, double sigma2, const Eigen::MatrixXd& X,
                                    const Eigen::MatrixXd& Z, const Eigen::MatrixXd& D) {
  if (model.beta.size() != X.cols()) throw InvalidDimension("beta is not conformable with X");
  const Eigen::VectorXd eta = X * model.beta;
  Eigen::VectorXd w(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double re_var = 0.0;
    if (model.attenuate) re_var = Z.row(i) * D * Z.row(i).transpose();
    w(i) = iterated_weight(model, sigma2, eta(i), re_var);
  }
  return w;
}

Eigen::MatrixXd build_sigma(const DesignSpace& space, const Design& design, const CovarianceSpec& cov,
                            const ModelSpec& spec) {
  const ModelSpec model = spec.with_default_beta(space.periods());
  model.validate(space.periods());
  const Eigen::MatrixXd X = build_x(space, design);
  const Eigen::MatrixXd Z = build_z(space, design, cov);
  const Eigen::MatrixXd D = build_d(space, design, cov);
  const Eigen::VectorXd w = glm_weight_diagonal(model, cov.sigma2, X, Z, D);
  Eigen::MatrixXd sigma = Z * D * Z.transpose();
  sigma.diagonal() += w.cwiseInverse();
  return sigma;
}

Eigen::MatrixXd information_matrix(const Eigen::MatrixXd& X, const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != X.rows() || sigma.cols() != X.rows())
    throw InvalidDimension("Sigma is not conformable with X");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericError("Sigma is not positive definite");
  const Eigen::MatrixXd Y = llt.matrixL().solve(X);
  return Y.transpose() * Y;
}

double c_optimality(const Eigen::MatrixXd& M, const Eigen::VectorXd& c) {
  const Eigen::Index P = M.rows();
  if (c.size() != P) throw InvalidDimension("contrast length does not match information matrix");
  constexpr double inf = std::numeric_limits<double>::infinity();

  double max_diag = 0.0;
  for (Eigen::Index i = 0; i < P; ++i) max_diag = std::max(max_diag, M(i, i));
  if (!(max_diag > 0.0)) return inf;

  Eigen::Index active[64];
  std::vector<Eigen::Index> active_heap;
  Eigen::Index* idx = active;
  if (P > 64) {
    active_heap.resize(static_cast<size_t>(P));
    idx = active_heap.data();
  }
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < P; ++i) {
    if (M(i, i) > kPivotTolerance * max_diag) {
      idx[n++] = i;
    } else if (c(i) != 0.0) {
      return inf;
    }
  }

  Eigen::MatrixXd R(n, n);
  Eigen::VectorXd cr(n);
  for (Eigen::Index a = 0; a < n; ++a) {
    cr(a) = c(idx[a]);
    for (Eigen::Index b = 0; b < n; ++b) R(a, b) = M(idx[a], idx[b]);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(R);
  if (ldlt.info() != Eigen::Success) return inf;
  const auto d = ldlt.vectorD();
  for (Eigen::Index a = 0; a < n; ++a) {
    if (!(d(a) > kPivotTolerance * max_diag)) return inf;
  }
  const double v = cr.dot(ldlt.solve(cr));
  if (!std::isfinite(v) || v < 0.0) return inf;
  return v;
}

InformationDiagnostics diagnose_information(const Eigen::MatrixXd& M) {
  InformationDiagnostics out;
  const double max_diag = M.diagonal().maxCoeff();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    if (max_diag > 0.0 && M(i, i) > kPivotTolerance * max_diag)
      keep.push_back(i);
    else
      ++out.dropped;
  }
  if (keep.empty()) {
    out.condition_number = std::numeric_limits<double>::infinity();
    return out;
  }
  const auto n = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd R(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) R(a, b) = M(keep[static_cast<size_t>(a)], keep[static_cast<size_t>(b)]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  out.min_eigenvalue = ev.minCoeff();
  out.max_eigenvalue = ev.maxCoeff();
  for (Eigen::Index i = 0; i < n; ++i)
    if (ev(i) > kPivotTolerance * out.max_eigenvalue) ++out.rank;
  out.condition_number = out.min_eigenvalue > kPivotTolerance * out.max_eigenvalue
                             ? out.max_eigenvalue / out.min_eigenvalue
                             : std::numeric_limits<double>::infinity();
  return out;
}

ClusterPeriodModel::ClusterPeriodModel(int periods, CovarianceSpec cov, ModelSpec model)
    : periods_(periods), cov_(cov), model_(model.with_default_beta(periods)) {
  cov_.validate();
  model_.validate(periods);
  obs_var_.resize(static_cast<size_t>(2 * periods));
  const double re_var = cov_.random_effect_variance();
  for (int t = 0; t < periods; ++t) {
    for (int treated = 0; treated <= 1; ++treated) {
      const double eta = model_.beta(t) + treated * model_.beta(periods);
      const double w = iterated_weight(model_, cov_.sigma2, eta, re_var);
      if (!(w > 0.0) || !std::isfinite(w))
        throw NumericError("iterated weight is not positive for period " + std::to_string(t + 1));
      obs_var_[static_cast<size_t>(2 * t + treated)] = 1.0 / w;
    }
  }
}

Eigen::MatrixXd ClusterPeriodModel::cell_mean_covariance(const ClusterCells& cells) const {
  const auto n = static_cast<Eigen::Index>(cells.size());
  Eigen::MatrixXd S(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    const auto& ca = cells[static_cast<size_t>(a)];
    for (Eigen::Index b = 0; b < a; ++b) {
      const double g = cov_.entry(std::abs(ca.period - cells[static_cast<size_t>(b)].period), 0);
      S(a, b) = g;
      S(b, a) = g;
    }
    S(a, a) = cov_.entry(0, 0) + observation_variance(ca.period, ca.treated) / ca.count;
  }
  return S;
}

Eigen::MatrixXd ClusterPeriodModel::cell_mean_design(const ClusterCells& cells) const {
  const auto n = static_cast<Eigen::Index>(cells.size());
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, parameters());
  for (Eigen::Index a = 0; a < n; ++a) {
    X(a, cells[static_cast<size_t>(a)].period) = 1.0;
    X(a, periods_) = cells[static_cast<size_t>(a)].treated;
  }
  return X;
}

void ClusterPeriodModel::add_cluster_information(const ClusterCells& cells, Eigen::MatrixXd& M) const {
  if (cells.empty()) return;
  Eigen::LLT<Eigen::MatrixXd> llt(cell_mean_covariance(cells));
  if (llt.info() != Eigen::Success) throw NumericError("cell-mean covariance is not positive definite");
  const Eigen::MatrixXd Y = llt.matrixL().solve(cell_mean_design(cells));
  M.selfadjointView<Eigen::Lower>().rankUpdate(Y.transpose());
  M.triangularView<Eigen::StrictlyUpper>() = M.transpose();
}

Eigen::MatrixXd ClusterPeriodModel::cluster_information(const ClusterCells& cells) const {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(parameters(), parameters());
  add_cluster_information(cells, M);
  return M;
}

Eigen::MatrixXd ClusterPeriodModel::information(const std::vector<ClusterCells>& clusters) const {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(parameters(), parameters());
  for (const auto& cl : clusters) add_cluster_information(cl, M);
  return M;
}

Eigen::VectorXd ClusterPeriodModel::estimation_weights(const ClusterCells& cells,
                                                       const Eigen::VectorXd& u) const {
  Eigen::LLT<Eigen::MatrixXd> llt(cell_mean_covariance(cells));
  if (llt.info() != Eigen::Success) throw NumericError("cell-mean covariance is not positive definite");
  return llt.solve(cell_mean_design(cells) * u);
}

AggregatedModel aggregate_cluster_periods(const DesignSpace& space, const Design& design,
                                          const CovarianceSpec& cov, const ModelSpec& model) {
  const auto clusters = expand_clusters(space, design);
  if (clusters.empty()) throw InvalidInput("empty design");
  const ClusterPeriodModel cpm(space.periods(), cov, model);
  Eigen::Index rows = 0;
  for (const auto& cl : clusters) rows += static_cast<Eigen::Index>(cl.size());
  AggregatedModel out;
  out.X = Eigen::MatrixXd::Zero(rows, cpm.parameters());
  out.sigma = Eigen::MatrixXd::Zero(rows, rows);
  Eigen::Index at = 0;
  for (const auto& cl : clusters) {
    const auto n = static_cast<Eigen::Index>(cl.size());
    out.X.middleRows(at, n) = cpm.cell_mean_design(cl);
    out.sigma.block(at, at, n, n) = cpm.cell_mean_covariance(cl);
    out.block_sizes.push_back(static_cast<int>(n));
    at += n;
  }
  return out;
}

}  // namespace crtopt
