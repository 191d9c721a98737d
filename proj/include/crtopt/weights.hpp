#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "crtopt/design_space.hpp"

namespace crtopt {

// Approximate design: a probability vector over the units of a space.
struct WeightedDesign {
  std::vector<double> weights;
  double total_budget = 1.0;
  double criterion = 0.0;
  int iterations = 0;
  // Criterion after each full update (mixed_model_weights only).
  std::vector<double> trace;
};

class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, WeightedDesign last)
      : std::runtime_error(what), last_(std::move(last)) {}
  const WeightedDesign& last_iterate() const { return last_; }

 private:
  WeightedDesign last_;
};

struct MixedModelWeightOptions {
  double total_budget = 1.0;   // N: observations (cells) or clusters (sequences)
  double tolerance = 1e-6;     // on max |phi - phi'|
  int max_iterations = 10000;
  double drop_below = 1e-7;
  double monotone_slack = 1e-9;  // relative
};

// Fixed-point weights phi_j proportional to |a_j|, a = Sigma^-1 X (X'Sigma^-1X)^-1 c,
// with Sigma = (1/N) W^-1 diag(phi^-1) + Z D Z' at the cluster-period level.
// Cells below `drop_below` are removed for good, and periods with no remaining weight
// leave the linear predictor. Observation units in the same cell share that cell's
// weight equally. For sequence spaces the same update is applied to whole units,
// phi_j proportional to phi_j * sqrt(u' M_j u) with u = M(phi)^-1 c.
// Throws NonConvergence past the iteration cap and NumericError if an update
// increases the criterion by more than the monotone slack.
WeightedDesign mixed_model_weights(const DesignSpace& space, const CovarianceSpec& cov, const ModelSpec& model,
                                   const Eigen::VectorXd& contrast, const MixedModelWeightOptions& options = {});

struct SimplexOptions {
  double tolerance = 1e-9;  // projected-gradient residual on the relative gradient
  int max_iterations = 100000;
};

// Minimises c' M(phi)^-1 c with M(phi) = sum_j phi_j M_j over the probability simplex
// by projected gradient with Barzilai-Borwein steps and Armijo backtracking.
// Requires mutually uncorrelated units (sequence granularity). Throws Infeasible when
// the criterion is infinite for every weighting, NonConvergence past the cap.
WeightedDesign simplex_weight_descent(const DesignSpace& space, const CovarianceSpec& cov,
                                      const ModelSpec& model, const Eigen::VectorXd& contrast,
                                      const SimplexOptions& options = {});

// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

// Criterion of an approximate design with total budget N.
double weighted_criterion(const DesignSpace& space, const CovarianceSpec& cov, const ModelSpec& model,
                          const Eigen::VectorXd& contrast, const std::vector<double>& weights,
                          double total_budget);

// Sum of unit weights per sequence (sequence spaces: identity), per cluster otherwise.
std::vector<double> weights_by_cluster(const DesignSpace& space, const std::vector<double>& weights);

}  // namespace crtopt
