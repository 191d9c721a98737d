#include "crtopt/exact.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

#include "crtopt/errors.hpp"

namespace crtopt {

void ClosedFormParams::validate() const {
  if (clusters < 1 || periods < 1) throw InvalidDimension("closed-form parameters need m >= 1 and T >= 1");
  if (!(n > 0.0)) throw InvalidInput("n must be > 0");
  if (!(tau2 >= 0.0) || !(omega2 >= 0.0) || !(sigma2 > 0.0))
    throw InvalidInput("variance components out of range");
}

double ClosedFormParams::cluster_mean_correlation() const {
  const double rb = rho_bar();
  return periods * rb / (1.0 + (periods - 1) * rb);
}

DesignCoefficients design_coefficients(const TreatmentMatrix& treat) {
  const auto m = treat.rows();
  const auto T = treat.cols();
  if (m == 0 || T == 0) throw InvalidDimension("empty treatment matrix");
  if ((treat.array() < 0).any() || (treat.array() > 1).any())
    throw InvalidInput("treatment matrix entries must be 0 or 1");
  const Eigen::MatrixXd J = treat.cast<double>();
  const Eigen::RowVectorXd col_mean = J.colwise().mean();
  const Eigen::VectorXd row_mean = J.rowwise().mean();
  const double grand = J.mean();
  DesignCoefficients out;
  out.a = (J.rowwise() - col_mean).squaredNorm() / static_cast<double>(m * T);
  out.b = (row_mean.array() - grand).square().mean();
  return out;
}

double closed_form_precision(const ClosedFormParams& params, const TreatmentMatrix& treat) {
  params.validate();
  if (treat.rows() != params.clusters || treat.cols() != params.periods)
    throw InvalidDimension("treatment matrix does not match m x T");
  const auto coef = design_coefficients(treat);
  const double R = params.cluster_mean_correlation();
  const double mT = static_cast<double>(params.clusters) * params.periods;
  const double p = mT * (coef.a - coef.b * R) / (params.omega2 + params.sigma2 / params.n);
  // round-off on an uninformative design
  return p > 1e-12 * mT / (params.omega2 + params.sigma2 / params.n) ? p : 0.0;
}

TreatmentMatrix closed_form_ordering(int clusters, int periods, double R, int treated_cells) {
  if (clusters < 1 || periods < 1) throw InvalidDimension("ordering needs m >= 1 and T >= 1");
  if (treated_cells < 0 || treated_cells > clusters * periods)
    throw InvalidInput("treated-cell budget outside [0, mT]");
  struct Entry {
    double score;
    int cluster;
    int period;
  };
  std::vector<Entry> order;
  order.reserve(static_cast<size_t>(clusters * periods));
  for (int j = 0; j < clusters; ++j) {
    const double x0 = (2.0 * j + 1.0 - clusters) / (2.0 * clusters);
    for (int t = 0; t < periods; ++t) {
      const double x1 = (2.0 * t + 1.0 - periods) / (2.0 * periods);
      order.push_back({R * x1 - x0, j, t});
    }
  }
  std::stable_sort(order.begin(), order.end(), [](const Entry& a, const Entry& b) {
    return std::tie(b.score, a.cluster, b.period) < std::tie(a.score, b.cluster, a.period);
  });
  TreatmentMatrix out = TreatmentMatrix::Zero(clusters, periods);
  for (int i = 0; i < treated_cells; ++i) out(order[static_cast<size_t>(i)].cluster, order[static_cast<size_t>(i)].period) = 1;
  return out;
}

ClosedFormDesign closed_form_design(const ClosedFormParams& params) {
  params.validate();
  const double R = params.cluster_mean_correlation();
  ClosedFormDesign best;
  best.treat = TreatmentMatrix::Zero(params.clusters, params.periods);
  for (int budget = 0; budget <= params.clusters * params.periods; ++budget) {
    auto treat = closed_form_ordering(params.clusters, params.periods, R, budget);
    const double p = closed_form_precision(params, treat);
    if (p > best.precision) {
      best.precision = p;
      best.treat = std::move(treat);
      best.treated_cells = budget;
    }
  }
  return best;
}

DesignSpace space_from_treatment(const TreatmentMatrix& treat, int n) {
  std::vector<ExperimentalUnit> units;
  for (Eigen::Index k = 0; k < treat.rows(); ++k) {
    ExperimentalUnit u{static_cast<int>(k), {}};
    for (Eigen::Index t = 0; t < treat.cols(); ++t)
      u.cells.push_back({static_cast<int>(t) + 1, treat(k, t), n});
    units.push_back(std::move(u));
  }
  return DesignSpace(static_cast<int>(treat.cols()), std::move(units), 1, Granularity::sequence);
}

namespace {
void check_weight_domain(int periods, int min_periods, double r, double rho) {
  if (periods < min_periods)
    throw InvalidDimension("closed-form weights need T >= " + std::to_string(min_periods));
  if (!(r >= 1.0)) throw InvalidInput("r must be >= 1");
  if (!(rho >= 0.0 && rho < 1.0)) throw InvalidInput("rho must lie in [0, 1)");
}
}  // namespace

std::vector<double> lawrie_weights(int periods, double r, double rho) {
  check_weight_domain(periods, 3, r, rho);
  const double den = 1.0 + rho * (r * periods - 1.0);
  std::vector<double> w(static_cast<size_t>(periods - 1), r * rho / den);
  w.front() = w.back() = (1.0 + rho * (3.0 * r - 1.0)) / (2.0 * den);
  return w;
}

std::vector<double> zhan_weights(int periods, double r, double rho) {
  check_weight_domain(periods, 2, r, rho);
  const double den = 1.0 + rho * (r * periods - 1.0);
  std::vector<double> w(static_cast<size_t>(periods + 1), r * rho / den);
  w.front() = w.back() = (1.0 + rho * (r - 1.0)) / (2.0 * den);
  return w;
}

}  // namespace crtopt
