#pragma once

#include <Eigen/Dense>
#include <vector>

#include "crtopt/design_space.hpp"

namespace crtopt {

// 0/1 treatment indicators, one row per cluster, one column per period.
using TreatmentMatrix = Eigen::MatrixXi;

// Linear mixed model with nested-exchangeable (EXC2) random effects and n
// observations in every cluster-period.
struct ClosedFormParams {
  int clusters = 0;
  int periods = 0;
  double n = 1.0;
  double tau2 = 0.0;
  double omega2 = 0.0;
  double sigma2 = 1.0;

  void validate() const;
  // Correlation of two cluster-period means of the same cluster.
  double rho_bar() const { return tau2 / (tau2 + omega2 + sigma2 / n); }
  // Correlation-based weight R = T rho_bar / (1 + (T-1) rho_bar).
  double cluster_mean_correlation() const;
};

struct DesignCoefficients {
  double a = 0.0;  // mean within-period variance of the treatment indicator
  double b = 0.0;  // variance of the per-cluster treated fractions
};

DesignCoefficients design_coefficients(const TreatmentMatrix& treat);

// Precision 1/Var(delta_hat) = mT (a - b R) / (omega2 + sigma2/n). Zero for designs
// that carry no information about the treatment effect.
double closed_form_precision(const ClosedFormParams& params, const TreatmentMatrix& treat);

// Switch cells to treated in decreasing R*x1(t) - x0(j) until `treated_cells` are
// treated, with x0, x1 the evenly spaced midpoints of [-1/2, 1/2]. Ties go to the
// lower cluster index, then the later period. Throws InvalidInput for a budget
// outside [0, mT].
TreatmentMatrix closed_form_ordering(int clusters, int periods, double R, int treated_cells);

struct ClosedFormDesign {
  TreatmentMatrix treat;
  int treated_cells = 0;
  double precision = 0.0;
};

// Best ordering over every treated-cell budget.
ClosedFormDesign closed_form_design(const ClosedFormParams& params);

// Sequence space (one unit per row, maxReplication 1, n observations per cell)
// and the design selecting every row.
DesignSpace space_from_treatment(const TreatmentMatrix& treat, int n);

// Optimal cluster proportions over the T-1 stepped-wedge sequences (EXC1).
std::vector<double> lawrie_weights(int periods, double r, double rho);

// Optimal cluster proportions over the T+1 unidirectional sequences, all-control
// first and all-treated last (EXC1).
std::vector<double> zhan_weights(int periods, double r, double rho);

}  // namespace crtopt
