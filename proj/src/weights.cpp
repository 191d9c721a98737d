#include "crtopt/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "crtopt/errors.hpp"
#include "crtopt/gls.hpp"

namespace crtopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();

Eigen::VectorXd contrast_or_default(const Eigen::VectorXd& c, int periods) {
  if (c.size() == 0) return treatment_contrast(periods);
  if (c.size() != periods + 1) throw InvalidDimension("contrast must have length T+1");
  return c;
}

// Solve M u = c on the parameters whose rows are not identically zero. Returns false
// when c is not estimable.
bool reduced_solve(const Eigen::MatrixXd& M, const Eigen::VectorXd& c, Eigen::VectorXd& u, double& value) {
  const double max_diag = M.diagonal().maxCoeff();
  if (!(max_diag > 0.0)) return false;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    if (M(i, i) > kPivotTolerance * max_diag)
      keep.push_back(i);
    else if (c(i) != 0.0)
      return false;
  }
  const auto n = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd R(n, n);
  Eigen::VectorXd cr(n);
  for (Eigen::Index a = 0; a < n; ++a) {
    cr(a) = c(keep[static_cast<size_t>(a)]);
    for (Eigen::Index b = 0; b < n; ++b) R(a, b) = M(keep[static_cast<size_t>(a)], keep[static_cast<size_t>(b)]);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(R);
  if (ldlt.info() != Eigen::Success) return false;
  for (Eigen::Index a = 0; a < n; ++a)
    if (!(ldlt.vectorD()(a) > kPivotTolerance * max_diag)) return false;
  const Eigen::VectorXd ur = ldlt.solve(cr);
  u = Eigen::VectorXd::Zero(M.rows());
  for (Eigen::Index a = 0; a < n; ++a) u(keep[static_cast<size_t>(a)]) = ur(a);
  value = cr.dot(ur);
  return std::isfinite(value);
}

// Distinct (cluster, period) cells of a grouped space with the units they hold.
struct WeightCell {
  int cluster = 0;
  int period = 0;  // 0-based
  int treated = 0;
  std::vector<int> units;
};

std::vector<WeightCell> group_cells(const DesignSpace& space) {
  std::vector<WeightCell> cells;
  std::map<std::pair<int, int>, size_t> index;
  for (int j = 0; j < space.size(); ++j) {
    const Cell& c = space.unit(j).cells.front();
    const int k = space.cluster_of(j);
    auto [it, inserted] = index.emplace(std::make_pair(k, c.period - 1), cells.size());
    if (inserted) cells.push_back({k, c.period - 1, c.treated, {}});
    cells[it->second].units.push_back(j);
  }
  return cells;
}

// Cluster-period mean layout of a grouped space under cell weights.
std::vector<ClusterCells> weighted_clusters(const DesignSpace& space, const std::vector<WeightCell>& cells,
                                            const std::vector<double>& cell_weight, double budget,
                                            std::vector<std::vector<size_t>>* members = nullptr) {
  std::vector<ClusterCells> clusters(static_cast<size_t>(space.cluster_count()));
  if (members) members->assign(clusters.size(), {});
  for (size_t i = 0; i < cells.size(); ++i) {
    if (cell_weight[i] <= 0.0) continue;
    const auto k = static_cast<size_t>(cells[i].cluster);
    clusters[k].push_back({cells[i].period, cells[i].treated, budget * cell_weight[i]});
    if (members) (*members)[k].push_back(i);
  }
  for (size_t k = 0; k < clusters.size(); ++k) {
    std::vector<size_t> order(clusters[k].size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return clusters[k][a].period < clusters[k][b].period; });
    ClusterCells sorted;
    std::vector<size_t> sorted_members;
    for (size_t o : order) {
      sorted.push_back(clusters[k][o]);
      if (members) sorted_members.push_back((*members)[k][o]);
    }
    clusters[k] = std::move(sorted);
    if (members) (*members)[k] = std::move(sorted_members);
  }
  return clusters;
}

std::vector<Eigen::MatrixXd> unit_information(const DesignSpace& space, const ClusterPeriodModel& cpm) {
  std::vector<Eigen::MatrixXd> out;
  for (int j = 0; j < space.size(); ++j) {
    Design one{std::vector<int>(static_cast<size_t>(space.size()), 0)};
    one.multiplicity[static_cast<size_t>(j)] = 1;
    out.push_back(cpm.cluster_information(expand_clusters(space, one).front()));
  }
  return out;
}

Eigen::MatrixXd mix(const std::vector<Eigen::MatrixXd>& infos, const Eigen::VectorXd& phi, double scale) {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(infos.front().rows(), infos.front().cols());
  for (size_t j = 0; j < infos.size(); ++j)
    if (phi(static_cast<Eigen::Index>(j)) > 0.0) M.noalias() += (scale * phi(static_cast<Eigen::Index>(j))) * infos[j];
  return M;
}

void drop_and_normalise(std::vector<double>& phi, double drop_below) {
  double total = 0.0;
  for (double& p : phi) {
    if (p < drop_below) p = 0.0;
    total += p;
  }
  if (total > 0.0)
    for (double& p : phi) p /= total;
}

}  // namespace

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  const auto n = v.size();
  std::vector<double> s(v.data(), v.data() + n);
  std::sort(s.begin(), s.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    cum += s[static_cast<size_t>(i)];
    const double t = (cum - 1.0) / static_cast<double>(i + 1);
    if (s[static_cast<size_t>(i)] - t > 0.0) theta = t;
  }
  return (v.array() - theta).max(0.0).matrix();
}

std::vector<double> weights_by_cluster(const DesignSpace& space, const std::vector<double>& weights) {
  if (static_cast<int>(weights.size()) != space.size()) throw InvalidInput("weight vector does not match space");
  std::vector<double> out(static_cast<size_t>(space.cluster_count()), 0.0);
  for (int j = 0; j < space.size(); ++j) out[static_cast<size_t>(space.cluster_of(j))] += weights[static_cast<size_t>(j)];
  return out;
}

double weighted_criterion(const DesignSpace& space, const CovarianceSpec& cov, const ModelSpec& model,
                          const Eigen::VectorXd& contrast, const std::vector<double>& weights,
                          double total_budget) {
  if (static_cast<int>(weights.size()) != space.size()) throw InvalidInput("weight vector does not match space");
  const ClusterPeriodModel cpm(space.periods(), cov, model);
  const Eigen::VectorXd c = contrast_or_default(contrast, space.periods());
  if (space.units_uncorrelated()) {
    const auto infos = unit_information(space, cpm);
    const Eigen::Map<const Eigen::VectorXd> phi(weights.data(), static_cast<Eigen::Index>(weights.size()));
    return c_optimality(mix(infos, phi, total_budget), c);
  }
  const auto cells = group_cells(space);
  std::vector<double> cell_weight(cells.size(), 0.0);
  for (size_t i = 0; i < cells.size(); ++i)
    for (int j : cells[i].units) cell_weight[i] += weights[static_cast<size_t>(j)];
  return c_optimality(cpm.information(weighted_clusters(space, cells, cell_weight, total_budget)), c);
}

WeightedDesign mixed_model_weights(const DesignSpace& space, const CovarianceSpec& cov, const ModelSpec& model,
                                   const Eigen::VectorXd& contrast, const MixedModelWeightOptions& options) {
  if (!(options.tolerance > 0.0)) throw InvalidInput("tolerance must be > 0");
  if (!(options.total_budget > 0.0)) throw InvalidInput("total budget must be > 0");
  const ClusterPeriodModel cpm(space.periods(), cov, model);
  const Eigen::VectorXd c = contrast_or_default(contrast, space.periods());
  const double N = options.total_budget;
  const auto J = static_cast<size_t>(space.size());

  WeightedDesign out;
  out.total_budget = N;

  if (space.units_uncorrelated()) {
    const auto infos = unit_information(space, cpm);
    std::vector<double> phi(J, 1.0 / static_cast<double>(J));
    double previous = kInf;
    for (int it = 1;; ++it) {
      const Eigen::Map<const Eigen::VectorXd> phi_vec(phi.data(), static_cast<Eigen::Index>(J));
      Eigen::VectorXd u;
      double value = kInf;
      if (!reduced_solve(mix(infos, phi_vec, N), c, u, value))
        throw Infeasible("criterion is infinite under the current weights");
      out.trace.push_back(value);
      if (value > previous * (1.0 + options.monotone_slack) + 1e-300)
        throw NumericError("weight update increased the criterion");
      previous = value;

      std::vector<double> next(J, 0.0);
      double total = 0.0;
      for (size_t j = 0; j < J; ++j) {
        if (phi[j] <= 0.0) continue;
        next[j] = phi[j] * std::sqrt(std::max(0.0, u.dot(infos[j] * u)));
        total += next[j];
      }
      for (double& p : next) p /= total;
      drop_and_normalise(next, options.drop_below);
      double delta = 0.0;
      for (size_t j = 0; j < J; ++j) delta = std::max(delta, std::abs(next[j] - phi[j]));
      phi = std::move(next);
      out.iterations = it;
      if (delta <= options.tolerance) break;
      if (it >= options.max_iterations) {
        out.weights = phi;
        out.criterion = value;
        throw NonConvergence("weight iteration did not converge within the iteration cap", out);
      }
    }
    out.weights = phi;
    out.criterion = weighted_criterion(space, cov, model, c, phi, N);
    return out;
  }

  const auto cells = group_cells(space);
  std::vector<double> phi(cells.size());
  for (size_t i = 0; i < cells.size(); ++i)
    phi[i] = static_cast<double>(cells[i].units.size()) / static_cast<double>(J);

  auto unit_weights = [&](const std::vector<double>& cell_phi) {
    std::vector<double> w(J, 0.0);
    for (size_t i = 0; i < cells.size(); ++i)
      for (int j : cells[i].units)
        w[static_cast<size_t>(j)] = cell_phi[i] / static_cast<double>(cells[i].units.size());
    return w;
  };

  double previous = kInf;
  for (int it = 1;; ++it) {
    std::vector<std::vector<size_t>> members;
    const auto clusters = weighted_clusters(space, cells, phi, N, &members);
    const Eigen::MatrixXd M = cpm.information(clusters);
    Eigen::VectorXd u;
    double value = kInf;
    if (!reduced_solve(M, c, u, value)) throw Infeasible("criterion is infinite under the current weights");
    out.trace.push_back(value);
    if (value > previous * (1.0 + options.monotone_slack) + 1e-300)
      throw NumericError("weight update increased the criterion");
    previous = value;

    std::vector<double> next(cells.size(), 0.0);
    double total = 0.0;
    for (size_t k = 0; k < clusters.size(); ++k) {
      if (clusters[k].empty()) continue;
      const Eigen::VectorXd a = cpm.estimation_weights(clusters[k], u);
      for (size_t r = 0; r < members[k].size(); ++r) {
        next[members[k][r]] = std::abs(a(static_cast<Eigen::Index>(r)));
        total += next[members[k][r]];
      }
    }
    if (!(total > 0.0)) throw NumericError("estimation weights vanished");
    for (double& p : next) p /= total;
    drop_and_normalise(next, options.drop_below);
    double delta = 0.0;
    for (size_t i = 0; i < cells.size(); ++i) delta = std::max(delta, std::abs(next[i] - phi[i]));
    phi = std::move(next);
    out.iterations = it;
    if (delta <= options.tolerance) break;
    if (it >= options.max_iterations) {
      out.weights = unit_weights(phi);
      out.criterion = value;
      throw NonConvergence("weight iteration did not converge within the iteration cap", out);
    }
  }
  out.weights = unit_weights(phi);
  out.criterion = c_optimality(cpm.information(weighted_clusters(space, cells, phi, N)), c);
  return out;
}

WeightedDesign simplex_weight_descent(const DesignSpace& space, const CovarianceSpec& cov,
                                      const ModelSpec& model, const Eigen::VectorXd& contrast,
                                      const SimplexOptions& options) {
  if (!space.units_uncorrelated())
    throw InvalidInput("simplex weight descent needs mutually uncorrelated units (sequence granularity)");
  if (!(options.tolerance > 0.0)) throw InvalidInput("tolerance must be > 0");
  const ClusterPeriodModel cpm(space.periods(), cov, model);
  const Eigen::VectorXd c = contrast_or_default(contrast, space.periods());
  const auto infos = unit_information(space, cpm);
  const Eigen::Index J = space.size();

  struct Eval {
    double f = kInf;
    Eigen::VectorXd grad;
  };
  auto evaluate = [&](const Eigen::VectorXd& phi, bool with_grad) {
    Eval e;
    Eigen::VectorXd u;
    double value = kInf;
    if (!reduced_solve(mix(infos, phi, 1.0), c, u, value)) return e;
    e.f = value;
    if (with_grad) {
      e.grad.resize(J);
      for (Eigen::Index j = 0; j < J; ++j) e.grad(j) = -u.dot(infos[static_cast<size_t>(j)] * u);
    }
    return e;
  };

  Eigen::VectorXd phi = Eigen::VectorXd::Constant(J, 1.0 / static_cast<double>(J));
  Eval cur = evaluate(phi, true);
  if (!std::isfinite(cur.f)) throw Infeasible("criterion is infinite for every weighting of this space");

  WeightedDesign out;
  auto residual = [&](const Eigen::VectorXd& x, const Eval& e) {
    const Eigen::VectorXd g = e.grad / e.f;
    return (x - project_to_simplex(x - g)).lpNorm<Eigen::Infinity>();
  };

  // Work with the relative gradient g/f so that step sizes do not depend on the
  // scale of the criterion.
  double step = 1.0;
  for (int it = 1; it <= options.max_iterations; ++it) {
    const Eigen::VectorXd h = cur.grad / cur.f;
    if (residual(phi, cur) <= options.tolerance) {
      out.iterations = it - 1;
      out.weights.assign(phi.data(), phi.data() + J);
      out.criterion = cur.f;
      return out;
    }
    Eigen::VectorXd trial;
    Eval next;
    double t = step;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt, t *= 0.5) {
      trial = project_to_simplex(phi - t * h);
      next = evaluate(trial, true);
      // Armijo on f, plus a few ulps so that steps lost in rounding still count
      const double bound = cur.f * (1.0 + 1e-4 * h.dot(trial - phi)) + 8.0 * kEps * cur.f;
      if (std::isfinite(next.f) && next.f <= bound) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const Eigen::VectorXd s = trial - phi;
    const Eigen::VectorXd y = next.grad / next.f - h;
    const double sy = s.dot(y);
    step = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-10, 1e10) : std::min(1e10, 2.0 * t);
    phi = trial;
    cur = std::move(next);
    out.iterations = it;
  }
  out.weights.assign(phi.data(), phi.data() + J);
  out.criterion = cur.f;
  throw NonConvergence("simplex descent did not reach the stationarity tolerance", out);
}

}  // namespace crtopt
