#pragma once

#include <Eigen/Dense>
#include <vector>

#include "crtopt/covariance.hpp"
#include "crtopt/design_space.hpp"

namespace crtopt {

// Zeger-style attenuation constant for the logit link, 16*sqrt(3)/(15*pi).
double attenuation_constant();

// GLM iterated weight (dmu/deta)^2 / Var(y|u) for one observation with linear
// predictor eta. `re_variance` is z'Dz for that observation and is used only when
// the model attenuates. Gaussian-identity returns 1/sigma2.
double iterated_weight(const ModelSpec& model, double sigma2, double eta, double re_variance);

// Diagonal of W evaluated at the marginal mean X*beta, one entry per row of X.
// Throws NumericError on a non-finite linear predictor.
Eigen::VectorXd glm_weight_diagonal(const ModelSpec& model, double sigma2, const Eigen::MatrixXd& X,
                                    const Eigen::MatrixXd& Z, const Eigen::MatrixXd& D);

// Observation covariance W^-1 + Z D Z'. Exact for gaussian-identity.
Eigen::MatrixXd build_sigma(const DesignSpace& space, const Design& design, const CovarianceSpec& cov,
                            const ModelSpec& model);

// X' Sigma^-1 X via a Cholesky solve. Throws NumericError if Sigma is not positive definite.
Eigen::MatrixXd information_matrix(const Eigen::MatrixXd& X, const Eigen::MatrixXd& sigma);

// Pivot tolerance, relative to the largest diagonal entry of M.
inline constexpr double kPivotTolerance = 1e-10;

// c' M^- c when c is estimable under M, +infinity otherwise. Parameters with an
// all-zero row (periods with no observations) are removed first; any remaining
// pivot of the symmetric factorisation below kPivotTolerance marks c as not estimable.
double c_optimality(const Eigen::MatrixXd& M, const Eigen::VectorXd& c);

struct InformationDiagnostics {
  int rank = 0;                   // after dropping empty parameters
  int dropped = 0;                // parameters with an all-zero row
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  double condition_number = 0.0;  // +inf when singular
};

InformationDiagnostics diagnose_information(const Eigen::MatrixXd& M);

// Cluster-period mean model: one row per non-empty cluster-period, block-diagonal
// covariance with one block per cluster.
struct AggregatedModel {
  Eigen::MatrixXd X;
  Eigen::MatrixXd sigma;
  std::vector<int> block_sizes;
};

AggregatedModel aggregate_cluster_periods(const DesignSpace& space, const Design& design,
                                          const CovarianceSpec& cov, const ModelSpec& model);

// Per-cluster evaluation of the cluster-period mean model. Holds the covariance and
// the per-(period, treatment) individual-level variance 1/W so that a cluster's
// information X'Sigma^-1X is a small dense solve of size (non-empty periods).
class ClusterPeriodModel {
 public:
  ClusterPeriodModel(int periods, CovarianceSpec cov, ModelSpec model);

  int periods() const { return periods_; }
  int parameters() const { return periods_ + 1; }
  const CovarianceSpec& covariance() const { return cov_; }
  const ModelSpec& model() const { return model_; }

  // Individual-level variance of one observation, W^-1 for that cell.
  double observation_variance(int period0, int treated) const {
    return obs_var_[static_cast<size_t>(2 * period0 + treated)];
  }

  // Covariance of the cell means of one cluster.
  Eigen::MatrixXd cell_mean_covariance(const ClusterCells& cells) const;
  // Cell-mean design rows of one cluster.
  Eigen::MatrixXd cell_mean_design(const ClusterCells& cells) const;

  // X'Sigma^-1X contributed by one cluster (P x P).
  Eigen::MatrixXd cluster_information(const ClusterCells& cells) const;
  void add_cluster_information(const ClusterCells& cells, Eigen::MatrixXd& M) const;

  // Sigma^-1 X u for one cluster: the estimation weights of its cell means given
  // u = M^-1 c.
  Eigen::VectorXd estimation_weights(const ClusterCells& cells, const Eigen::VectorXd& u) const;

  Eigen::MatrixXd information(const std::vector<ClusterCells>& clusters) const;

 private:
  int periods_;
  CovarianceSpec cov_;
  ModelSpec model_;
  std::vector<double> obs_var_;
};

}  // namespace crtopt
